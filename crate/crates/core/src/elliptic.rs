//! Damped Newton solver for `log det(g + dd-bar phi)/det g = F + b` with
//! `integrate(phi) = 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowProblem;
use crate::grid::ScalarField;
use crate::metric::{integrate, invert_field, MetricField};
use crate::spectral::{contract, MatrixField};

pub const DEFAULT_MAX_NEWTON: usize = 50;
pub const LINEAR_RTOL: f64 = 1e-10;
const GMRES_RESTART: usize = 40;
const GMRES_MAX_ITERS: usize = 400;
const MAX_BACKTRACKS: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticSolution {
    pub b: f64,
    pub phi_tilde_inf: ScalarField,
    pub residual_sup: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: DEFAULT_MAX_NEWTON,
        }
    }
}

struct Iterate {
    phi: ScalarField,
    g: ScalarField,
    b: f64,
    residual_sup: f64,
    gprime: MatrixField,
}

fn assess(p: &FlowProblem, phi: ScalarField) -> Result<Iterate> {
    let e = p.eval(&phi)?;
    let b = integrate(&e.rhs, &p.weights)?;
    let residual_sup = e
        .rhs
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max((v - b).abs()));
    Ok(Iterate {
        phi,
        g: e.rhs,
        b,
        residual_sup,
        gprime: e.gprime,
    })
}

/// Solves from `phi = 0`.
pub fn solve(g: &MetricField, f: &ScalarField, tol: f64) -> Result<EllipticSolution> {
    solve_with(
        g,
        f,
        None,
        &NewtonOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn solve_with(
    g: &MetricField,
    f: &ScalarField,
    initial: Option<&ScalarField>,
    opts: &NewtonOptions,
) -> Result<EllipticSolution> {
    if !(opts.tol >= 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {} below 1e-12",
            opts.tol
        )));
    }
    let p = FlowProblem::new(g.clone(), f.clone())?;
    let start = match initial {
        Some(phi) => p.normalize(phi)?,
        None => ScalarField::zeros(p.grid),
    };
    let mut it = assess(&p, start)?;
    let mut iters = 0;
    while it.residual_sup > opts.tol {
        if iters >= opts.max_iters {
            return Err(Error::MaxIterations {
                iters,
                residual: it.residual_sup,
            });
        }
        iters += 1;
        let inv = invert_field(&it.gprime)?;
        let rhs: Vec<f64> = it.g.values.iter().map(|v| -(v - it.b)).collect();
        let (psi, _db) = bordered_solve(&p, &inv, &rhs)?;
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = it.phi.add_scaled(s, &psi);
            if let Ok(next) = assess(&p, cand) {
                let min_ok = next.gprime.samples.iter().all(|m| m.cholesky().is_some());
                if min_ok && next.residual_sup < it.residual_sup {
                    accepted = Some(next);
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some(next) => it = next,
            None => {
                return Err(Error::LineSearchFailure {
                    residual: it.residual_sup,
                })
            }
        }
    }
    let phi_tilde_inf = p.normalize(&it.phi)?;
    Ok(EllipticSolution {
        b: it.b,
        phi_tilde_inf,
        residual_sup: it.residual_sup,
        newton_iters: iters,
    })
}

/// `g'^{i j-bar} d_i d_{j-bar} psi`.
fn apply_laplacian(p: &FlowProblem, inv: &MatrixField, psi: &[f64]) -> Result<Vec<f64>> {
    let f = ScalarField {
        grid: p.grid,
        values: psi.to_vec(),
    };
    Ok(contract(&p.ops.complex_hessian(&f), inv)?.values)
}

/// Solves `[L -1; w^T 0] [psi; db] = [rhs; 0]` by right-preconditioned
/// restarted GMRES. The preconditioner inverts `c * flat Laplacian` on
/// nonconstant modes and maps the mean to `db`.
fn bordered_solve(p: &FlowProblem, inv: &MatrixField, rhs: &[f64]) -> Result<(ScalarField, f64)> {
    let len = p.grid.len();
    let n = p.grid.complex_dim as f64;
    let c = inv.samples.iter().map(|m| m.trace().re).sum::<f64>() / (n * len as f64);
    let w = &p.weights.weights;
    let wsum: f64 = w.iter().sum();

    let precond = |v: &[f64]| -> Vec<f64> {
        let r = &v[..len];
        let mean = r.iter().sum::<f64>() / len as f64;
        let field = ScalarField {
            grid: p.grid,
            values: r.to_vec(),
        };
        let spec = p.ops.forward(&field);
        let out = p.ops.apply_symbol(&spec, |wv| {
            let k2 = wv.k2();
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / (0.25 * c * k2), 0.0)
            }
        });
        let mut psi: Vec<f64> = out.into_iter().map(|z| z.re).collect();
        let wpsi: f64 = psi.iter().zip(w).map(|(a, b)| a * b).sum();
        let shift = (v[len] - wpsi) / wsum;
        for x in psi.iter_mut() {
            *x += shift;
        }
        psi.push(-mean);
        psi
    };
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let mut out = apply_laplacian(p, inv, &x[..len])?;
        for o in out.iter_mut() {
            *o -= x[len];
        }
        out.push(x[..len].iter().zip(w).map(|(a, b)| a * b).sum());
        Ok(out)
    };

    let mut b = rhs.to_vec();
    b.push(0.0);
    let y = gmres(&|v| apply(&precond(v)), &b, LINEAR_RTOL)?;
    let x = precond(&y);
    Ok((
        ScalarField {
            grid: p.grid,
            values: x[..len].to_vec(),
        },
        x[len],
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES from a zero initial guess.
fn gmres(op: &dyn Fn(&[f64]) -> Result<Vec<f64>>, b: &[f64], rtol: f64) -> Result<Vec<f64>> {
    let dim = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; dim];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut total = 0;
    while total < GMRES_MAX_ITERS {
        let ax = op(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let beta = norm(&r);
        if beta / bnorm <= rtol {
            return Ok(x);
        }
        let m = GMRES_RESTART;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|q| q / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            total += 1;
            let mut wv = op(&v[j])?;
            for i in 0..=j {
                h[i][j] = dot(&wv, &v[i]);
                for (a, q) in wv.iter_mut().zip(&v[i]) {
                    *a -= h[i][j] * q;
                }
            }
            let hnorm = norm(&wv);
            h[j + 1][j] = hnorm;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k_used = j + 1;
            if g[j + 1].abs() / bnorm <= 0.1 * rtol || total >= GMRES_MAX_ITERS || hnorm == 0.0 {
                break;
            }
            v.push(wv.iter().map(|q| q / hnorm).collect());
        }
        let mut yk = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * yk[l];
            }
            yk[i] = s / h[i][i];
        }
        for (i, yi) in yk.iter().enumerate() {
            for (a, q) in x.iter_mut().zip(&v[i]) {
                *a += yi * q;
            }
        }
    }
    let ax = op(&x)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    let final_rel = norm(&r) / bnorm;
    if final_rel <= rtol {
        Ok(x)
    } else {
        Err(Error::LinearSolveStagnation {
            rel_residual: final_rel,
        })
    }
}

/// Relative sup-norm gap between the centered difference of
/// `G(phi) = log det(g + dd-bar phi)/det g` along `dir` and `g'^{i j-bar} d_i d_{j-bar} dir`.
pub fn linearization_check(
    g: &MetricField,
    phi: &ScalarField,
    dir: &ScalarField,
    h_fd: f64,
) -> Result<f64> {
    let p = FlowProblem::new(g.clone(), ScalarField::zeros(g.grid))?;
    let plus = p.eval(&phi.add_scaled(h_fd, dir))?.rhs;
    let minus = p.eval(&phi.add_scaled(-h_fd, dir))?.rhs;
    let fd = plus.add_scaled(-1.0, &minus).map(|v| v / (2.0 * h_fd));
    let e = p.eval(phi)?;
    let lin = ScalarField {
        grid: g.grid,
        values: apply_laplacian(&p, &invert_field(&e.gprime)?, &dir.values)?,
    };
    let scale = lin.sup_abs();
    let gap = fd.dist_sup(&lin);
    if scale <= 1e-300 {
        return Ok(gap);
    }
    Ok(gap / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::flow_rhs;
    use crate::grid::TorusGrid;
    use crate::metric::{normalized_metric, MetricPreset};
    use crate::trig::TrigPoly;

    fn metric(n: usize, npts: usize, preset: MetricPreset) -> MetricField {
        normalized_metric(&TorusGrid::standard(n, npts).unwrap(), preset).unwrap()
    }

    #[test]
    fn constant_source() {
        let m = metric(1, 16, MetricPreset::HermitianNonkahler { epsilon: 0.3 });
        let sol = solve(&m, &ScalarField::constant(m.grid, 0.7), 1e-12).unwrap();
        assert!((sol.b + 0.7).abs() < 1e-14);
        assert_eq!(sol.phi_tilde_inf.sup_abs(), 0.0);
        assert_eq!(sol.newton_iters, 0);
    }

    #[test]
    fn manufactured_solution_recovered() {
        for (n, npts, spec) in [
            (1, 32, "cos:1,0:0.4; sin:1,1:0.2"),
            (2, 8, "cos:1,0,0,1:0.3; sin:0,1,1,0:0.2"),
        ] {
            let m = metric(n, npts, MetricPreset::HermitianNonkahler { epsilon: 0.3 });
            let psi = TrigPoly::parse(spec, &m.grid)
                .unwrap()
                .scaled(m.scale())
                .sample(&m.grid);
            let (l, _) = flow_rhs(&psi, &m, &ScalarField::zeros(m.grid)).unwrap();
            let w = m.weights();
            let c0 = integrate(&l, &w).unwrap();
            let f = l.shift(-c0);
            let sol = solve(&m, &f, 1e-11).unwrap();
            let psit = psi.shift(-integrate(&psi, &w).unwrap());
            assert!(sol.residual_sup <= 1e-11);
            assert!((sol.b - c0).abs() < 1e-11);
            assert!(sol.phi_tilde_inf.dist_sup(&psit) < 1e-9 * m.scale());
            assert!(integrate(&sol.phi_tilde_inf, &w).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn tolerance_floor() {
        let m = metric(1, 8, MetricPreset::Flat);
        let r = solve(&m, &ScalarField::zeros(m.grid), 1e-13);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn iteration_cap_reported() {
        let m = metric(1, 16, MetricPreset::HermitianNonkahler { epsilon: 0.3 });
        let f = ScalarField::from_fn(m.grid, |x| 0.3 * x[0].cos());
        let r = solve_with(
            &m,
            &f,
            None,
            &NewtonOptions {
                tol: 1e-12,
                max_iters: 1,
            },
        );
        assert!(matches!(r, Err(Error::MaxIterations { .. })));
    }

    #[test]
    fn linearization_flat() {
        let m = metric(1, 16, MetricPreset::Flat);
        let dir = ScalarField::from_fn(m.grid, |x| x[0].cos());
        let e = linearization_check(&m, &ScalarField::zeros(m.grid), &dir, 1e-5).unwrap();
        assert!(e <= 1e-6, "{e}");
        let c = linearization_check(
            &m,
            &ScalarField::zeros(m.grid),
            &ScalarField::constant(m.grid, 1.0),
            1e-5,
        )
        .unwrap();
        assert!(c < 1e-9);
    }

    #[test]
    fn unique_limit_from_different_guesses_and_b_identity() {
        let tol = 1e-11;
        for (n, npts) in [(1, 32), (2, 8)] {
            let m = metric(n, npts, MetricPreset::HermitianNonkahler { epsilon: 0.3 });
            let s = m.scale();
            let f = crate::config::random_source(&m.grid, 0.05, 2, 11).sample(&m.grid);
            let opts = NewtonOptions { tol, max_iters: 50 };
            let a = solve_with(&m, &f, None, &opts).unwrap();
            let guess = crate::config::random_source(&m.grid, 0.05 * s, 2, 12).sample(&m.grid);
            let b = solve_with(&m, &f, Some(&guess), &opts).unwrap();
            assert!((a.b - b.b).abs() <= 10.0 * tol, "{} vs {}", a.b, b.b);
            assert!(a.phi_tilde_inf.dist_sup(&b.phi_tilde_inf) <= 10.0 * tol * s.max(1.0));
            // b is the mean of log det(g'/g) - F at the limit
            let (rhs, _) = flow_rhs(&a.phi_tilde_inf, &m, &f).unwrap();
            let mean = integrate(&rhs, &m.weights()).unwrap();
            assert!((mean - a.b).abs() <= 10.0 * tol, "{mean} vs {}", a.b);
        }
    }
}
