//! Hermitian metrics on the torus, volume normalization and quadrature.
//!
//! Volume convention: `omega^n = kappa_n * det g * dx^1 ... dx^{2n}` with
//! `kappa_n = n! 2^n`, which follows from `sqrt(-1) dz ^ dz-bar = 2 dx ^ dy`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::herm::HermMat;
use crate::spectral::{MatrixField, SpectralOps};
use crate::trig::{TrigMode, TrigPoly};

pub const DEFAULT_LAMBDA_FLOOR: f64 = 0.1;

/// `n! 2^n`.
pub fn kappa(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 8.0,
        _ => unreachable!("complex dimension is 1 or 2"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MetricPreset {
    Flat,
    /// `I + d d-bar rho` for a fixed trigonometric potential scaled by `amplitude`.
    KahlerBump {
        amplitude: f64,
    },
    /// Trigonometric perturbation whose fundamental form is not closed when `n = 2`.
    HermitianNonkahler {
        epsilon: f64,
    },
}

impl MetricPreset {
    pub fn parse(name: &str, param: Option<f64>) -> Result<Self> {
        match name {
            "flat" => Ok(Self::Flat),
            "kahler_bump" => Ok(Self::KahlerBump {
                amplitude: param.unwrap_or(0.6),
            }),
            "hermitian_nonkahler" => Ok(Self::HermitianNonkahler {
                epsilon: param.unwrap_or(0.3),
            }),
            other => Err(Error::Config(format!("unknown metric preset '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::KahlerBump { .. } => "kahler_bump",
            Self::HermitianNonkahler { .. } => "hermitian_nonkahler",
        }
    }

    /// Potential of the Kähler preset.
    pub fn kahler_potential(n: usize, amplitude: f64, grid: &TorusGrid) -> TrigPoly {
        let modes = if n == 1 {
            vec![
                TrigMode::cos([1, 0, 0, 0], amplitude),
                TrigMode::sin([1, 1, 0, 0], 0.5 * amplitude),
            ]
        } else {
            vec![
                TrigMode::cos([1, 0, 0, 0], amplitude),
                TrigMode::sin([1, 0, 1, 0], 0.5 * amplitude),
                TrigMode::cos([0, 1, 0, -1], 0.5 * amplitude),
            ]
        };
        TrigPoly::new(modes, grid)
    }
}

/// Closed form `scale * (I + sum_t C_t * mode_t(x))` with constant Hermitian `C_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricDefinition {
    pub dim: usize,
    pub k_scale: f64,
    pub terms: Vec<(HermMat, TrigMode)>,
    pub scale: f64,
}

impl MetricDefinition {
    pub fn from_preset(grid: &TorusGrid, preset: MetricPreset) -> Self {
        let n = grid.complex_dim;
        let ks = grid.k_scale();
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let terms = match preset {
            MetricPreset::Flat => Vec::new(),
            MetricPreset::KahlerBump { amplitude } => {
                let rho = MetricPreset::kahler_potential(n, amplitude, grid);
                rho.modes
                    .iter()
                    .map(|m| {
                        // d_i d_{j-bar} of a mode e^{i k.x}-type term is -(1/4) S(k) times the mode
                        let mut s = HermMat::zeros(n);
                        for i in 0..n {
                            for j in 0..n {
                                let k = |a: usize| m.k[a] as f64 * ks;
                                let (a, b, cc, d) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
                                s.set(
                                    i,
                                    j,
                                    c(
                                        -0.25 * (k(a) * k(cc) + k(b) * k(d)),
                                        -0.25 * (k(a) * k(d) - k(b) * k(cc)),
                                    ),
                                );
                            }
                        }
                        (s, *m)
                    })
                    .collect()
            }
            MetricPreset::HermitianNonkahler { epsilon } => {
                if n == 1 {
                    vec![
                        (
                            HermMat::scalar(1, 0.5 * epsilon),
                            TrigMode::cos([1, 0, 0, 0], 1.0),
                        ),
                        (
                            HermMat::scalar(1, 0.5 * epsilon),
                            TrigMode::sin([0, 1, 0, 0], 1.0),
                        ),
                    ]
                } else {
                    let off_re = HermMat::from_rows(&[
                        &[c(0.0, 0.0), c(0.5 * epsilon, 0.0)],
                        &[c(0.5 * epsilon, 0.0), c(0.0, 0.0)],
                    ]);
                    let off_im = HermMat::from_rows(&[
                        &[c(0.0, 0.0), c(0.0, 0.5 * epsilon)],
                        &[c(0.0, -0.5 * epsilon), c(0.0, 0.0)],
                    ]);
                    vec![
                        (
                            HermMat::from_diag(&[epsilon, 0.0]),
                            TrigMode::cos([0, 0, 1, 0], 1.0),
                        ),
                        (
                            HermMat::from_diag(&[0.0, epsilon]),
                            TrigMode::sin([1, 0, 0, 0], 1.0),
                        ),
                        (off_re, TrigMode::cos([0, 1, 0, 0], 1.0)),
                        (off_im, TrigMode::sin([0, 1, 0, 0], 1.0)),
                    ]
                }
            }
        };
        Self {
            dim: n,
            k_scale: ks,
            terms,
            scale: 1.0,
        }
    }

    fn mode_value(&self, m: &TrigMode, x: &[f64; 4]) -> f64 {
        let p: f64 = (0..4).map(|a| m.k[a] as f64 * self.k_scale * x[a]).sum();
        m.cos_coef * p.cos() + m.sin_coef * p.sin()
    }

    fn mode_deriv(&self, m: &TrigMode, axis: usize, x: &[f64; 4]) -> f64 {
        let p: f64 = (0..4).map(|a| m.k[a] as f64 * self.k_scale * x[a]).sum();
        let ka = m.k[axis] as f64 * self.k_scale;
        ka * (-m.cos_coef * p.sin() + m.sin_coef * p.cos())
    }

    pub fn eval(&self, x: &[f64; 4]) -> HermMat {
        let mut g = HermMat::identity(self.dim);
        for (coef, m) in &self.terms {
            g = g.add(&coef.scale(self.mode_value(m, x)));
        }
        g.scale(self.scale)
    }

    /// Exact derivative along real axis `axis`.
    pub fn d_axis(&self, axis: usize, x: &[f64; 4]) -> HermMat {
        let mut g = HermMat::zeros(self.dim);
        for (coef, m) in &self.terms {
            g = g.add(&coef.scale(self.mode_deriv(m, axis, x)));
        }
        g.scale(self.scale)
    }

    /// Exact `d_k g` for complex index `k` (matrix of `d_k g_{i j-bar}`).
    pub fn d_holo(&self, k: usize, x: &[f64; 4]) -> crate::herm::CMat {
        let a = self.d_axis(2 * k, x);
        let b = self.d_axis(2 * k + 1, x);
        let mut out = crate::herm::CMat::zeros(self.dim);
        let j = Complex64::new(0.0, 1.0);
        for r in 0..self.dim {
            for s in 0..self.dim {
                out.set(r, s, 0.5 * (a.get(r, s) - j * b.get(r, s)));
            }
        }
        out
    }
}

/// Metric sampled on a grid, with its closed-form definition.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    pub grid: TorusGrid,
    pub samples: MatrixField,
    pub definition: MetricDefinition,
    pub preset: MetricPreset,
}

impl MetricField {
    pub fn scale(&self) -> f64 {
        self.definition.scale
    }

    /// Pointwise inverse matrices.
    pub fn inverse(&self) -> Result<MatrixField> {
        invert_field(&self.samples)
    }

    /// Smallest eigenvalue of `g / scale` over the grid.
    pub fn min_relative_eig(&self) -> f64 {
        self.samples
            .samples
            .iter()
            .map(|m| m.min_eig() / self.scale())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn weights(&self) -> VolumeWeights {
        VolumeWeights::from_metric(self)
    }
}

pub fn invert_field(m: &MatrixField) -> Result<MatrixField> {
    let samples = m
        .samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            s.inverse_hpd().ok_or(Error::PositivityViolation {
                index,
                min_eig: s.min_eig(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixField {
        grid: m.grid,
        samples,
    })
}

/// Samples a preset at unit scale, rejecting it if any sample has an
/// eigenvalue below `lambda_floor` (or fails Cholesky).
pub fn build_metric_with_floor(
    grid: &TorusGrid,
    preset: MetricPreset,
    lambda_floor: f64,
) -> Result<MetricField> {
    let definition = MetricDefinition::from_preset(grid, preset);
    let mut samples = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let g = definition.eval(&grid.coords(idx));
        let min_eig = g.min_eig();
        if g.cholesky().is_none() || min_eig < lambda_floor {
            return Err(Error::PositivityViolation {
                index: idx,
                min_eig,
            });
        }
        samples.push(g);
    }
    Ok(MetricField {
        grid: *grid,
        samples: MatrixField {
            grid: *grid,
            samples,
        },
        definition,
        preset,
    })
}

pub fn build_metric(grid: &TorusGrid, preset: MetricPreset) -> Result<MetricField> {
    build_metric_with_floor(grid, preset, DEFAULT_LAMBDA_FLOOR)
}

/// Discrete `int omega^n`.
pub fn discrete_volume(g: &MetricField) -> f64 {
    let n = g.grid.complex_dim;
    let cell = kappa(n) * g.grid.cell_volume();
    neumaier_sum(g.samples.samples.iter().map(|m| m.det().re * cell))
}

/// Compensated summation in iteration order.
pub fn neumaier_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Rescales so that the discrete volume is one. Returns the metric and the
/// factor applied; an already-normalized metric comes back unchanged with
/// factor exactly one.
pub fn volume_normalize(g: &MetricField) -> (MetricField, f64) {
    let vol = discrete_volume(g);
    if (vol - 1.0).abs() <= 1e-14 {
        return (g.clone(), 1.0);
    }
    let lambda = vol.powf(-1.0 / g.grid.complex_dim as f64);
    let mut out = g.clone();
    for s in out.samples.samples.iter_mut() {
        *s = s.scale(lambda);
    }
    out.definition.scale *= lambda;
    (out, lambda)
}

/// Builds a preset and normalizes it to unit volume.
pub fn normalized_metric(grid: &TorusGrid, preset: MetricPreset) -> Result<MetricField> {
    Ok(volume_normalize(&build_metric(grid, preset)?).0)
}

/// Quadrature weights of `omega^n`; they sum to one for a normalized metric.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeWeights {
    pub grid: TorusGrid,
    pub weights: Vec<f64>,
}

impl VolumeWeights {
    pub fn from_metric(g: &MetricField) -> Self {
        let n = g.grid.complex_dim;
        let cell = kappa(n) * g.grid.cell_volume();
        Self {
            grid: g.grid,
            weights: g
                .samples
                .samples
                .iter()
                .map(|m| m.det().re * cell)
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }
}

/// `sum_x f(x) w(x)`, compensated and accumulated in index order.
pub fn integrate(f: &ScalarField, w: &VolumeWeights) -> Result<f64> {
    f.check_grid(&w.grid)?;
    Ok(neumaier_sum(
        f.values.iter().zip(&w.weights).map(|(a, b)| a * b),
    ))
}

/// Largest modulus over the grid of the components
/// `d_k g_{i j-bar} - d_i g_{k j-bar}` of `d omega`, by spectral differentiation.
pub fn max_d_omega(g: &MetricField) -> f64 {
    let n = g.grid.complex_dim;
    if n < 2 {
        return 0.0;
    }
    let ops = SpectralOps::new(g.grid);
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                if k >= i {
                    continue;
                }
                let dk_gij = ops.d_holo_complex(&g.samples.entry(i, j), k);
                let di_gkj = ops.d_holo_complex(&g.samples.entry(k, j), i);
                worst = worst.max(dk_gij.dist_sup(&di_gkj));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_presets_are_constant() {
        let g1 = TorusGrid::standard(1, 16).unwrap();
        let m = build_metric(&g1, MetricPreset::Flat).unwrap();
        assert!(m.samples.samples.iter().all(|s| *s == HermMat::identity(1)));
        let (nm, lambda) = volume_normalize(&m);
        // int omega = 2 (2 pi)^2 for the unit metric
        assert!((lambda - 1.0 / (8.0 * PI * PI)).abs() < 1e-16);
        assert!(nm
            .samples
            .samples
            .iter()
            .all(|s| (s.get(0, 0).re - lambda).abs() < 1e-18));

        let g2 = TorusGrid::standard(2, 8).unwrap();
        let m2 = normalized_metric(&g2, MetricPreset::Flat).unwrap();
        let c = m2.scale();
        assert!(m2
            .samples
            .samples
            .iter()
            .all(|s| s.sub(&HermMat::scalar(2, c)).norm_max() == 0.0));
    }

    #[test]
    fn nonkahler_preset_positivity_and_torsion() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let m = build_metric(&g, MetricPreset::HermitianNonkahler { epsilon: 0.3 }).unwrap();
        assert!(m.min_relative_eig() >= 0.1);
        assert!(max_d_omega(&m) > 0.01);
    }

    #[test]
    fn kahler_preset_is_closed() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let m = build_metric(&g, MetricPreset::KahlerBump { amplitude: 0.6 }).unwrap();
        assert!(max_d_omega(&m) < 1e-12);
    }

    #[test]
    fn positivity_violation_reported() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let r = build_metric(&g, MetricPreset::HermitianNonkahler { epsilon: 0.9 });
        assert!(matches!(r, Err(Error::PositivityViolation { .. })));
    }

    #[test]
    fn normalization_is_idempotent() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let m = normalized_metric(&g, MetricPreset::HermitianNonkahler { epsilon: 0.3 }).unwrap();
        let vol = discrete_volume(&m);
        assert!((vol - 1.0).abs() <= 1e-13);
        let (again, lambda) = volume_normalize(&m);
        assert_eq!(lambda, 1.0);
        assert_eq!(again, m);
        let w = m.weights();
        let one = ScalarField::constant(g, 1.0);
        assert!((integrate(&one, &w).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn integrate_basics() {
        let g = TorusGrid::standard(1, 16).unwrap();
        let m = normalized_metric(&g, MetricPreset::Flat).unwrap();
        let w = m.weights();
        let c = ScalarField::constant(g, 3.5);
        assert!((integrate(&c, &w).unwrap() - 3.5).abs() < 1e-14);
        let s = ScalarField::from_fn(g, |x| x[0].sin());
        assert!(integrate(&s, &w).unwrap().abs() < 1e-14);
        let other = TorusGrid::standard(1, 8).unwrap();
        assert_eq!(
            integrate(&ScalarField::zeros(other), &w),
            Err(Error::GridMismatch)
        );
    }

    #[test]
    fn closed_form_derivative_matches_fd() {
        let g = TorusGrid::standard(2, 8).unwrap();
        let def =
            MetricDefinition::from_preset(&g, MetricPreset::HermitianNonkahler { epsilon: 0.3 });
        let x = [0.4, 1.3, 2.2, -0.7];
        let h = 1e-5;
        for a in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = def.eval(&xp).sub(&def.eval(&xm)).scale(0.5 / h);
            assert!(fd.sub(&def.d_axis(a, &x)).norm_max() < 1e-9);
        }
    }

    #[test]
    fn quadrature_is_spectrally_accurate() {
        let presets = [
            MetricPreset::Flat,
            MetricPreset::KahlerBump { amplitude: 0.1 },
            MetricPreset::HermitianNonkahler { epsilon: 0.3 },
        ];
        for n in [1, 2] {
            for preset in presets {
                let at = |pts| {
                    let g = TorusGrid::standard(n, pts).unwrap();
                    let m = normalized_metric(&g, preset).unwrap();
                    let f = ScalarField::from_fn(g, |x| (x[0].sin() + 0.5 * x[1].cos()).exp());
                    integrate(&f, &m.weights()).unwrap()
                };
                let (coarse, fine) = if n == 1 {
                    (at(32), at(64))
                } else {
                    (at(16), at(32))
                };
                assert!(
                    (coarse - fine).abs() <= 1e-10,
                    "{preset:?} n={n}: {coarse} vs {fine}"
                );
            }
        }
    }
}
