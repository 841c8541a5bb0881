//! Li–Yau quantity and Harnack ratios for positive solutions of the
//! linearized heat equation, built from snapshots of `u = dphi/dt`.
//!
//! `u` changes sign, so the diagnostics run on the window surrogates
//! `xi_m(x, tau) = sup_y u(y, m-1) - u(x, m-1+tau)` for `tau in (0, 1]`.
//! When a surrogate touches zero the window falls back to
//! `u + (1 + eps) sup|u|`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::herm::HermMat;
use crate::spectral::{MatrixField, SpectralOps};

pub const DEFAULT_ALPHA: f64 = 1.5;
/// Relative slack of the shift fallback.
pub const SHIFT_EPS: f64 = 0.1;
const TIME_MATCH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiYauSample {
    /// Window-local time.
    pub t: f64,
    /// `max_x (|df|^2 - alpha f_t)`.
    pub envelope: f64,
    /// `t * envelope`.
    pub quantity: f64,
}

fn check_positive(t: f64, u: &ScalarField) -> Result<()> {
    let m = u.min();
    if !(m > 0.0) {
        return Err(Error::NonPositiveU { t, value: m });
    }
    Ok(())
}

/// Li–Yau quantity at every snapshot that has neighbours on both sides.
/// `times` are window-local and positive; `gprime_inv[s]` is the inverse of
/// `g'` at snapshot `s`.
pub fn liyau_quantity(
    ops: &SpectralOps,
    times: &[f64],
    u: &[ScalarField],
    gprime_inv: &[MatrixField],
    alpha: f64,
) -> Result<Vec<LiYauSample>> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (1, 2)"
        )));
    }
    if times.len() != u.len() || times.len() != gprime_inv.len() {
        return Err(Error::InvalidArgument(
            "snapshot lists differ in length".into(),
        ));
    }
    for (t, v) in times.iter().zip(u) {
        check_positive(*t, v)?;
    }
    let n = ops.grid().complex_dim;
    let mut out = Vec::new();
    for s in 1..times.len().saturating_sub(1) {
        let dt = times[s + 1] - times[s - 1];
        if !(dt > 0.0) || !(times[s] > 0.0) {
            return Err(Error::InvalidArgument(
                "snapshot times must increase from > 0".into(),
            ));
        }
        // d log u = du / u keeps the spectral derivative on a smooth field
        let grads: Vec<_> = (0..n).map(|i| ops.d_holo(&u[s], i)).collect();
        let inv = &gprime_inv[s].samples;
        let mut env = f64::NEG_INFINITY;
        for p in 0..u[s].values.len() {
            let val = u[s].values[p];
            let v: Vec<_> = grads.iter().map(|g| g.values[p] / val).collect();
            let mut grad2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    grad2 += (v[i].conj() * inv[p].get(i, j) * v[j]).re;
                }
            }
            let ft = (u[s + 1].values[p].ln() - u[s - 1].values[p].ln()) / dt;
            env = env.max(grad2 - alpha * ft);
        }
        out.push(LiYauSample {
            t: times[s],
            envelope: env,
            quantity: times[s] * env,
        });
    }
    Ok(out)
}

/// `(C1, C2)` with `C2 >= 0` minimizing `sum_j (C1 + C2/t_j)` subject to
/// `envelope_j <= C1 + C2/t_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub c1: f64,
    pub c2: f64,
}

impl EnvelopeFit {
    pub fn bound(&self, t: f64) -> f64 {
        self.c1 + self.c2 / t
    }

    pub fn certifies(&self, samples: &[LiYauSample]) -> bool {
        self.c1.is_finite()
            && self.c2.is_finite()
            && samples
                .iter()
                .all(|s| s.envelope <= self.bound(s.t) + 1e-12 * self.bound(s.t).abs().max(1.0))
    }
}

pub fn fit_envelope(samples: &[LiYauSample]) -> Result<EnvelopeFit> {
    if samples.is_empty() {
        return Err(Error::SeriesTooShort {
            reason: "no Li-Yau samples to fit".into(),
        });
    }
    let feasible = |c1: f64, c2: f64| {
        c2 >= 0.0
            && samples.iter().all(|s| {
                let b = c1 + c2 / s.t;
                s.envelope <= b + 1e-12 * b.abs().max(1.0)
            })
    };
    let cost = |c1: f64, c2: f64| samples.iter().map(|s| c1 + c2 / s.t).sum::<f64>();
    let flat = samples
        .iter()
        .map(|s| s.envelope)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut best = (cost(flat, 0.0), EnvelopeFit { c1: flat, c2: 0.0 });
    for (a, sa) in samples.iter().enumerate() {
        for sb in &samples[a + 1..] {
            let (xa, xb) = (1.0 / sa.t, 1.0 / sb.t);
            if (xa - xb).abs() < 1e-14 {
                continue;
            }
            let c2 = (sa.envelope - sb.envelope) / (xa - xb);
            let c1 = sa.envelope - c2 * xa;
            if feasible(c1, c2) {
                let c = cost(c1, c2);
                if c < best.0 {
                    best = (c, EnvelopeFit { c1, c2 });
                }
            }
        }
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl HarnackConstants {
    /// Log of the right-hand factor `(t2/t1)^C2 exp(C3/(t2-t1) + C1 (t2-t1))`.
    pub fn log_factor(&self, t1: f64, t2: f64) -> f64 {
        let d = t2 - t1;
        self.c1 * d + self.c2 * (t2 / t1).ln() + self.c3 / d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub t1: f64,
    pub t2: f64,
    pub sup_t1: f64,
    pub inf_t2: f64,
    /// `None` when `inf u(., t2) <= 0`.
    pub constants: Option<HarnackConstants>,
}

impl HarnackReport {
    pub fn ratio(&self) -> f64 {
        self.sup_t1 / self.inf_t2
    }

    pub fn holds(&self) -> bool {
        match self.constants {
            Some(c) => {
                let lhs = self.ratio().ln();
                let rhs = c.log_factor(self.t1, self.t2);
                c.c1.is_finite()
                    && c.c2.is_finite()
                    && c.c3.is_finite()
                    && lhs <= rhs + 1e-12 * rhs.abs().max(1.0)
            }
            None => false,
        }
    }
}

/// Field at time `t` by linear interpolation between bracketing snapshots.
pub fn interpolate(times: &[f64], fields: &[ScalarField], t: f64) -> Result<ScalarField> {
    if let Some(s) = times.iter().position(|&s| (s - t).abs() <= TIME_MATCH) {
        return Ok(fields[s].clone());
    }
    let hi = times
        .iter()
        .position(|&s| s > t)
        .filter(|&h| h > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("time {t} outside the snapshot range")))?;
    let (a, b) = (times[hi - 1], times[hi]);
    let w = (t - a) / (b - a);
    Ok(fields[hi - 1]
        .map(|v| v * (1.0 - w))
        .add_scaled(w, &fields[hi]))
}

const HARNACK_GRID: usize = 10;

/// Checks the Harnack inequality between `t1` and `t2` and fits the
/// smallest nonnegative constants that make it hold over every pair drawn
/// from `t1`, `t2` and the times `k/10` inside the snapshot range.
pub fn harnack_check(times: &[f64], u: &[ScalarField], t1: f64, t2: f64) -> Result<HarnackReport> {
    if times.len() != u.len() || times.is_empty() {
        return Err(Error::InvalidArgument(
            "snapshot lists differ in length".into(),
        ));
    }
    let (lo, hi) = (times[0], times[times.len() - 1]);
    if !(t1 > 0.0 && t1 < t2 && t1 >= lo - TIME_MATCH && t2 <= hi + TIME_MATCH) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < t1 < t2 inside [{lo}, {hi}], got ({t1}, {t2})"
        )));
    }
    let sup_t1 = interpolate(times, u, t1)?.max();
    let inf_t2 = interpolate(times, u, t2)?.min();
    if !(inf_t2 > 0.0) {
        return Ok(HarnackReport {
            t1,
            t2,
            sup_t1,
            inf_t2,
            constants: None,
        });
    }
    let mut grid: Vec<f64> = (1..=HARNACK_GRID)
        .map(|k| k as f64 / HARNACK_GRID as f64)
        .filter(|&s| s > 0.0 && s >= lo - TIME_MATCH && s <= hi + TIME_MATCH)
        .chain([t1, t2])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= TIME_MATCH);
    let mut extremes = Vec::with_capacity(grid.len());
    for &s in &grid {
        let f = interpolate(times, u, s)?;
        check_positive(s, &f)?;
        extremes.push((f.max(), f.min()));
    }
    let mut rows = Vec::new();
    for a in 0..grid.len() {
        for b in a + 1..grid.len() {
            let (ta, tb) = (grid[a], grid[b]);
            let d = tb - ta;
            rows.push((
                [d, (tb / ta).ln(), 1.0 / d],
                (extremes[a].0 / extremes[b].1).ln(),
            ));
        }
    }
    let c = fit_harnack(&rows);
    Ok(HarnackReport {
        t1,
        t2,
        sup_t1,
        inf_t2,
        constants: Some(c),
    })
}

/// Minimizes `sum_p coef_p . c` over `c >= 0` subject to `coef_p . c >= lhs_p`
/// by enumerating vertices. Every coefficient is positive, so the problem
/// is feasible and bounded.
fn fit_harnack(rows: &[([f64; 3], f64)]) -> HarnackConstants {
    // constraints as (a, b): a . c >= b, including c_i >= 0
    let mut cons: Vec<([f64; 3], f64)> = vec![
        ([1.0, 0.0, 0.0], 0.0),
        ([0.0, 1.0, 0.0], 0.0),
        ([0.0, 0.0, 1.0], 0.0),
    ];
    cons.extend_from_slice(rows);
    let obj: [f64; 3] = rows.iter().fold([0.0; 3], |acc, (a, _)| {
        [acc[0] + a[0], acc[1] + a[1], acc[2] + a[2]]
    });
    let feasible = |c: &[f64; 3]| {
        cons.iter().all(|(a, b)| {
            let v = a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
            v >= b - 1e-11 * b.abs().max(1.0)
        })
    };
    let mut best: Option<(f64, [f64; 3])> = None;
    for i in 0..cons.len() {
        for j in i + 1..cons.len() {
            for k in j + 1..cons.len() {
                let m = Matrix3::from_rows(&[cons[i].0.into(), cons[j].0.into(), cons[k].0.into()]);
                let Some(inv) = m.try_inverse() else { continue };
                let x = inv * Vector3::new(cons[i].1, cons[j].1, cons[k].1);
                let c = [x[0].max(0.0), x[1].max(0.0), x[2].max(0.0)];
                if !c.iter().all(|v| v.is_finite()) || !feasible(&c) {
                    continue;
                }
                let val = obj[0] * c[0] + obj[1] * c[1] + obj[2] * c[2];
                if best.map_or(true, |(b, _)| val < b) {
                    best = Some((val, c));
                }
            }
        }
    }
    let c = best.map(|(_, c)| c).unwrap_or([0.0; 3]);
    HarnackConstants {
        c1: c[0],
        c2: c[1],
        c3: c[2],
    }
}

/// Positive surrogate of one unit window.
#[derive(Clone, Debug)]
pub struct Surrogate {
    pub window: usize,
    /// Window-local times in `(0, 1]`.
    pub times: Vec<f64>,
    /// Indices into the snapshot list.
    pub indices: Vec<usize>,
    pub values: Vec<ScalarField>,
    /// True when the shift fallback replaced `xi_m`.
    pub shifted: bool,
}

/// Builds `xi_m` for window `m >= 1` from snapshots `(times, u)`.
pub fn xi_surrogate(times: &[f64], u: &[ScalarField], m: usize) -> Result<Surrogate> {
    if m == 0 {
        return Err(Error::InvalidArgument("windows start at m = 1".into()));
    }
    let t0 = (m - 1) as f64;
    let base = interpolate(times, u, t0)?.max();
    let indices: Vec<usize> = (0..times.len())
        .filter(|&s| times[s] > t0 + TIME_MATCH && times[s] <= t0 + 1.0 + TIME_MATCH)
        .collect();
    if indices.is_empty() {
        return Err(Error::SeriesTooShort {
            reason: format!("no snapshots inside window {m}"),
        });
    }
    let local: Vec<f64> = indices.iter().map(|&s| times[s] - t0).collect();
    let mut values: Vec<ScalarField> = indices.iter().map(|&s| u[s].map(|v| base - v)).collect();
    let mut shifted = false;
    if values.iter().any(|v| !(v.min() > 0.0)) {
        let sup = indices
            .iter()
            .map(|&s| u[s].sup_abs())
            .fold(base.abs(), f64::max);
        let c = (1.0 + SHIFT_EPS) * sup;
        values = indices.iter().map(|&s| u[s].shift(c)).collect();
        shifted = true;
        for (t, v) in local.iter().zip(&values) {
            check_positive(t0 + t, v)?;
        }
    }
    Ok(Surrogate {
        window: m,
        times: local,
        indices,
        values,
        shifted,
    })
}

/// Inverts packed `g'` samples for the Li–Yau gradient term.
pub fn inverse_field(
    grid: crate::grid::TorusGrid,
    packed: &super::PackedSnapshot,
) -> Result<MatrixField> {
    let n = grid.complex_dim;
    let samples = (0..grid.len())
        .map(|p| {
            let m: HermMat = packed.matrix(n, p);
            m.inverse_hpd().ok_or(Error::PositivityViolation {
                index: p,
                min_eig: m.min_eig(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixField { grid, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    fn grid() -> TorusGrid {
        TorusGrid::standard(1, 8).unwrap()
    }

    fn decaying(ts: &[f64]) -> Vec<ScalarField> {
        ts.iter()
            .map(|t| ScalarField::constant(grid(), 2.0 * (-t).exp()))
            .collect()
    }

    #[test]
    fn constant_u_gives_zero() {
        let ops = SpectralOps::new(grid());
        let ts: Vec<f64> = (1..=5).map(|k| k as f64 * 0.1).collect();
        let u = vec![ScalarField::constant(grid(), 3.0); 5];
        let inv = vec![MatrixField::constant(grid(), HermMat::identity(1)); 5];
        let q = liyau_quantity(&ops, &ts, &u, &inv, 1.5).unwrap();
        assert_eq!(q.len(), 3);
        assert!(q.iter().all(|s| s.quantity == 0.0));
    }

    #[test]
    fn exponential_decay_closed_form() {
        let ops = SpectralOps::new(grid());
        let ts: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1).collect();
        let u = decaying(&ts);
        let inv = vec![MatrixField::constant(grid(), HermMat::identity(1)); ts.len()];
        for s in liyau_quantity(&ops, &ts, &u, &inv, 1.5).unwrap() {
            assert!((s.quantity - 1.5 * s.t).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn rejects_nonpositive() {
        let ops = SpectralOps::new(grid());
        let u = vec![
            ScalarField::constant(grid(), 1.0),
            ScalarField::zeros(grid()),
        ];
        let inv = vec![MatrixField::constant(grid(), HermMat::identity(1)); 2];
        let r = liyau_quantity(&ops, &[0.1, 0.2], &u, &inv, 1.5);
        assert!(matches!(r, Err(Error::NonPositiveU { .. })));
    }

    #[test]
    fn envelope_fit_is_tight_and_certifies() {
        let samples: Vec<LiYauSample> = (1..=20)
            .map(|k| {
                let t = k as f64 * 0.05;
                let e = 0.3 + 0.2 / t - 0.01 * (k % 3) as f64;
                LiYauSample {
                    t,
                    envelope: e,
                    quantity: t * e,
                }
            })
            .collect();
        let fit = fit_envelope(&samples).unwrap();
        assert!(fit.certifies(&samples));
        assert!(
            (fit.c1 - 0.3).abs() < 1e-9 && (fit.c2 - 0.2).abs() < 1e-9,
            "{fit:?}"
        );
    }

    #[test]
    fn harnack_exponential_constants() {
        let ts: Vec<f64> = (1..=50).map(|k| k as f64 * 0.02).collect();
        let u = decaying(&ts);
        let r = harnack_check(&ts, &u, 0.5, 1.0).unwrap();
        assert!(((r.ratio()).ln() - 0.5).abs() < 1e-12);
        let c = r.constants.unwrap();
        assert!(
            (c.c1 - 1.0).abs() < 1e-9 && c.c2.abs() < 1e-9 && c.c3.abs() < 1e-9,
            "{c:?}"
        );
        assert!(r.holds());
    }

    #[test]
    fn harnack_rejects_degenerate_times() {
        let ts = [0.5, 1.0];
        let u = decaying(&ts);
        assert!(matches!(
            harnack_check(&ts, &u, 0.5, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn harnack_unverifiable_when_inf_vanishes() {
        let ts = [0.5, 1.0];
        let u = vec![
            ScalarField::constant(grid(), 1.0),
            ScalarField::zeros(grid()),
        ];
        let r = harnack_check(&ts, &u, 0.5, 1.0).unwrap();
        assert!(r.constants.is_none() && !r.holds());
    }

    #[test]
    fn surrogate_is_positive_for_decaying_maximum() {
        let ts: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let u: Vec<ScalarField> = ts
            .iter()
            .map(|t| ScalarField::from_fn(grid(), |x| (-t).exp() * x[0].cos()))
            .collect();
        let s = xi_surrogate(&ts, &u, 1).unwrap();
        assert!(!s.shifted);
        assert_eq!(s.times.len(), 10);
        assert!(s.values.iter().all(|v| v.min() > 0.0));
    }

    #[test]
    fn surrogate_falls_back_to_shift() {
        // a growing maximum makes xi negative somewhere
        let ts: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let u: Vec<ScalarField> = ts
            .iter()
            .map(|t| ScalarField::constant(grid(), *t))
            .collect();
        let s = xi_surrogate(&ts, &u, 1).unwrap();
        assert!(s.shifted);
        assert!(s.values.iter().all(|v| v.min() > 0.0));
    }
}
