//! Fourier differentiation on the periodic grid.
//!
//! Conventions: `d_i = (d_{x_{2i}} - i d_{x_{2i+1}})/2` and
//! `d_{i-bar} = (d_{x_{2i}} + i d_{x_{2i+1}})/2`. First-derivative multipliers
//! vanish on the Nyquist bin; pure second derivatives along one axis keep it.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, ScalarField, TorusGrid};
use crate::herm::HermMat;

/// Pointwise Hermitian matrices on a grid: metrics, inverse metrics and
/// complex Hessians.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    pub grid: TorusGrid,
    pub samples: Vec<HermMat>,
}

/// Complex Hessian `f_{i j-bar}` sampled pointwise.
pub type HessianField = MatrixField;

impl MatrixField {
    pub fn constant(grid: TorusGrid, m: HermMat) -> Self {
        Self {
            grid,
            samples: vec![m; grid.len()],
        }
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        self.samples
            .iter()
            .fold(0.0f64, |m, s| m.max(s.hermitian_defect()))
    }

    pub fn dist_sup(&self, o: &MatrixField) -> f64 {
        self.samples
            .iter()
            .zip(&o.samples)
            .fold(0.0f64, |m, (a, b)| m.max(a.sub(b).norm_max()))
    }

    /// Entry `(i, j)` as a complex field.
    pub fn entry(&self, i: usize, j: usize) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.samples.iter().map(|m| m.get(i, j)).collect(),
        }
    }
}

/// Per-axis wavenumber data passed to spectral symbols.
#[derive(Clone, Copy, Debug)]
pub struct Wave {
    /// Scaled wavenumbers per axis (`k * 2pi/L`), Nyquist kept.
    pub k: [f64; 4],
    /// Same, but zero on Nyquist bins (first-derivative convention).
    pub k_odd: [f64; 4],
}

impl Wave {
    /// `sum_a k_a^2`, the symbol of `-sum_a d_a^2`.
    pub fn k2(&self) -> f64 {
        self.k.iter().map(|k| k * k).sum()
    }

    pub fn k_inf(&self) -> f64 {
        self.k.iter().fold(0.0f64, |m, k| m.max(k.abs()))
    }
}

/// FFT plans and wavenumber tables for one grid.
pub struct SpectralOps {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    waves: Vec<Wave>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps")
            .field("grid", &self.grid)
            .finish()
    }
}

impl SpectralOps {
    pub fn new(grid: TorusGrid) -> Self {
        let n = grid.points_per_axis;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let ks = grid.k_scale();
        let waves = (0..grid.len())
            .map(|idx| {
                let mi = grid.unravel(idx);
                let mut w = Wave {
                    k: [0.0; 4],
                    k_odd: [0.0; 4],
                };
                for a in 0..grid.real_dim() {
                    let k = grid.wavenumber(mi[a]) as f64 * ks;
                    w.k[a] = k;
                    w.k_odd[a] = if grid.is_nyquist(mi[a]) { 0.0 } else { k };
                }
                w
            })
            .collect();
        Self {
            grid,
            fwd,
            inv,
            waves,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn waves(&self) -> &[Wave] {
        &self.waves
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis;
        let d = self.grid.real_dim();
        let total = buf.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            if stride == 1 {
                fft.process(buf);
                continue;
            }
            // gather every line along `axis` into contiguous rows
            let block = stride * n;
            let mut row = 0;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    let dst = &mut scratch[row * n..(row + 1) * n];
                    for (k, v) in dst.iter_mut().enumerate() {
                        *v = buf[base + off + k * stride];
                    }
                    row += 1;
                }
            }
            fft.process(&mut scratch);
            let mut row = 0;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    let src = &scratch[row * n..(row + 1) * n];
                    for (k, v) in src.iter().enumerate() {
                        buf[base + off + k * stride] = *v;
                    }
                    row += 1;
                }
            }
        }
    }

    pub fn forward_complex(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.transform(&mut buf, &self.fwd);
        buf
    }

    pub fn forward(&self, f: &ScalarField) -> Vec<Complex64> {
        debug_assert_eq!(f.grid, self.grid);
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Inverse transform including the `1/N^{2n}` normalization.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let mut buf = spec.to_vec();
        self.transform(&mut buf, &self.inv);
        let s = 1.0 / buf.len() as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
        buf
    }

    /// Multiplies a spectrum by `symbol(wave)` and transforms back.
    pub fn apply_symbol(
        &self,
        spec: &[Complex64],
        symbol: impl Fn(&Wave) -> Complex64,
    ) -> Vec<Complex64> {
        let mult: Vec<Complex64> = spec
            .iter()
            .zip(&self.waves)
            .map(|(s, w)| s * symbol(w))
            .collect();
        self.inverse(&mult)
    }

    /// Applies a real symbol to a real field.
    pub fn filter_real(&self, f: &ScalarField, symbol: impl Fn(&Wave) -> f64) -> ScalarField {
        let spec = self.forward(f);
        let out = self.apply_symbol(&spec, |w| Complex64::new(symbol(w), 0.0));
        ScalarField {
            grid: self.grid,
            values: out.into_iter().map(|v| v.re).collect(),
        }
    }

    pub fn d_real(&self, f: &ScalarField, axis: usize) -> ScalarField {
        assert!(axis < self.grid.real_dim(), "axis {axis} out of range");
        let spec = self.forward(f);
        let out = self.apply_symbol(&spec, |w| Complex64::new(0.0, w.k_odd[axis]));
        ScalarField {
            grid: self.grid,
            values: out.into_iter().map(|v| v.re).collect(),
        }
    }

    pub fn d_real_complex(&self, f: &ComplexField, axis: usize) -> ComplexField {
        let spec = self.forward_complex(&f.values);
        ComplexField {
            grid: self.grid,
            values: self.apply_symbol(&spec, |w| Complex64::new(0.0, w.k_odd[axis])),
        }
    }

    fn holo_symbol(w: &Wave, i: usize, anti: bool) -> Complex64 {
        // (i k_a -/+ i * i k_b) / 2
        let (a, b) = (2 * i, 2 * i + 1);
        let ika = Complex64::new(0.0, w.k_odd[a]);
        let ikb = Complex64::new(0.0, w.k_odd[b]);
        let j = Complex64::new(0.0, 1.0);
        if anti {
            0.5 * (ika + j * ikb)
        } else {
            0.5 * (ika - j * ikb)
        }
    }

    /// `d_i f` for complex index `i` (0-based).
    pub fn d_holo(&self, f: &ScalarField, i: usize) -> ComplexField {
        self.d_holo_complex(&ComplexField::from_real(f), i)
    }

    pub fn d_antiholo(&self, f: &ScalarField, i: usize) -> ComplexField {
        self.d_antiholo_complex(&ComplexField::from_real(f), i)
    }

    pub fn d_holo_complex(&self, f: &ComplexField, i: usize) -> ComplexField {
        assert!(i < self.grid.complex_dim);
        let spec = self.forward_complex(&f.values);
        ComplexField {
            grid: self.grid,
            values: self.apply_symbol(&spec, |w| Self::holo_symbol(w, i, false)),
        }
    }

    pub fn d_antiholo_complex(&self, f: &ComplexField, i: usize) -> ComplexField {
        assert!(i < self.grid.complex_dim);
        let spec = self.forward_complex(&f.values);
        ComplexField {
            grid: self.grid,
            values: self.apply_symbol(&spec, |w| Self::holo_symbol(w, i, true)),
        }
    }

    /// Symbol of `d_i d_{j-bar}` for `i != j` (built from first-derivative factors).
    fn mixed_symbol(w: &Wave, i: usize, j: usize) -> Complex64 {
        let (a, b, c, d) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        let k = &w.k_odd;
        Complex64::new(
            -0.25 * (k[a] * k[c] + k[b] * k[d]),
            -0.25 * (k[a] * k[d] - k[b] * k[c]),
        )
    }

    /// Symbol of `d_i d_{i-bar} = (d_{2i}^2 + d_{2i+1}^2)/4`.
    fn diag_symbol(w: &Wave, i: usize) -> f64 {
        let (a, b) = (2 * i, 2 * i + 1);
        -0.25 * (w.k[a] * w.k[a] + w.k[b] * w.k[b])
    }

    /// Complex Hessian from a precomputed spectrum of a real field.
    pub fn hessian_from_spectrum(&self, spec: &[Complex64]) -> HessianField {
        let n = self.grid.complex_dim;
        let len = self.grid.len();
        let mut samples = vec![HermMat::zeros(n); len];
        if n == 1 {
            let h = self.apply_symbol(spec, |w| Complex64::new(Self::diag_symbol(w, 0), 0.0));
            for (s, v) in samples.iter_mut().zip(h) {
                s.set(0, 0, Complex64::new(v.re, 0.0));
            }
        } else {
            // both real diagonals in one transform: re -> (0,0), im -> (1,1)
            let diag = self.apply_symbol(spec, |w| {
                Complex64::new(Self::diag_symbol(w, 0), Self::diag_symbol(w, 1))
            });
            let off = self.apply_symbol(spec, |w| Self::mixed_symbol(w, 0, 1));
            for ((s, dv), ov) in samples.iter_mut().zip(diag).zip(off) {
                s.set(0, 0, Complex64::new(dv.re, 0.0));
                s.set(1, 1, Complex64::new(dv.im, 0.0));
                s.set(0, 1, ov);
                s.set(1, 0, ov.conj());
            }
        }
        MatrixField {
            grid: self.grid,
            samples,
        }
    }

    pub fn complex_hessian(&self, f: &ScalarField) -> HessianField {
        debug_assert_eq!(f.grid, self.grid);
        self.hessian_from_spectrum(&self.forward(f))
    }

    /// Flat complex Laplacian `sum_i d_i d_{i-bar} f`.
    pub fn flat_laplacian(&self, f: &ScalarField) -> ScalarField {
        self.filter_real(f, |w| -0.25 * w.k2())
    }

    /// `g^{i j-bar} d_i d_{j-bar} f`, i.e. `tr(metric_inv * Hess f)` pointwise.
    pub fn laplacian(&self, f: &ScalarField, metric_inv: &MatrixField) -> Result<ScalarField> {
        f.check_grid(&metric_inv.grid)?;
        let h = self.complex_hessian(f);
        contract(&h, metric_inv)
    }

    /// Ratio of the largest coefficient on the two outermost shells to the
    /// largest nonzero-mode coefficient; zero for spatially constant fields.
    pub fn spectral_tail(&self, f: &ScalarField) -> f64 {
        let spec = self.forward(f);
        let ks = self.grid.k_scale();
        let outer = (self.grid.points_per_axis / 2 - 1) as f64 * ks - 1e-9;
        let mut top = 0.0f64;
        let mut tail = 0.0f64;
        for (s, w) in spec.iter().zip(&self.waves).skip(1) {
            let a = s.norm();
            top = top.max(a);
            if w.k_inf() >= outer {
                tail = tail.max(a);
            }
        }
        if top <= 1e-300 {
            0.0
        } else {
            tail / top
        }
    }
}

/// Pointwise `tr(inv * h)`, checking that the discarded imaginary part is tiny.
pub fn contract(h: &MatrixField, inv: &MatrixField) -> Result<ScalarField> {
    let n = h.grid.complex_dim;
    let mut values = Vec::with_capacity(h.samples.len());
    let mut worst = 0.0f64;
    for (hm, gi) in h.samples.iter().zip(&inv.samples) {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                s += gi.get(i, j) * hm.get(j, i);
            }
        }
        worst = worst.max(s.im.abs());
        values.push(s.re);
    }
    if worst > 1e-10 {
        return Err(Error::ImaginaryResidue { residue: worst });
    }
    Ok(ScalarField {
        grid: h.grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::TrigPoly;

    fn grid(n: usize, pts: usize) -> TorusGrid {
        TorusGrid::standard(n, pts).unwrap()
    }

    #[test]
    fn d_real_sin_is_cos() {
        let g = grid(2, 8);
        let ops = SpectralOps::new(g);
        for axis in 0..4 {
            let f = ScalarField::from_fn(g, |x| x[axis].sin());
            let df = ops.d_real(&f, axis);
            let want = ScalarField::from_fn(g, |x| x[axis].cos());
            assert!(df.dist_sup(&want) < 1e-13, "axis {axis}");
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = grid(2, 8);
        let ops = SpectralOps::new(g);
        let f = ScalarField::constant(g, 3.0);
        assert!(ops.d_real(&f, 2).sup_abs() < 1e-14);
        assert!(ops.d_holo(&f, 1).sup_abs() < 1e-14);
        let h = ops.complex_hessian(&f);
        assert!(h.samples.iter().all(|m| m.norm_max() < 1e-14));
    }

    #[test]
    fn exp_sin_resolution_doubling() {
        let sample = |pts| {
            let g = grid(1, pts);
            let ops = SpectralOps::new(g);
            let f = ScalarField::from_fn(g, |x| x[0].sin().exp());
            (g, ops.d_real(&f, 0))
        };
        let (gc, coarse) = sample(32);
        let (_, fine) = sample(64);
        // coarse point i sits at fine point 2i on both axes
        let mut err = 0.0f64;
        for idx in 0..gc.len() {
            let mi = gc.unravel(idx);
            let j = mi[0] * 2 * 64 + mi[1] * 2;
            err = err.max((coarse.values[idx] - fine.values[j]).abs());
        }
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn antiholo_is_conjugate_of_holo() {
        let g = grid(2, 8);
        let ops = SpectralOps::new(g);
        let p = TrigPoly::parse("cos:1,2,0,1:0.4; sin:0,1,-1,2:0.3", &g).unwrap();
        let f = p.sample(&g);
        for i in 0..2 {
            let a = ops.d_holo(&f, i);
            let b = ops.d_antiholo(&f, i);
            assert!(b.dist_sup(&a.conj()) < 1e-14);
        }
    }

    #[test]
    fn holo_antiholo_gives_quarter_laplacian() {
        let g = grid(1, 16);
        let ops = SpectralOps::new(g);
        let f = ScalarField::from_fn(g, |x| x[0].cos() + 0.5 * (2.0 * x[1]).sin());
        let dzbar = ops.d_antiholo(&f, 0);
        let both = ops.d_holo_complex(&dzbar, 0);
        let lap = ops.filter_real(&f, |w| -w.k2());
        let quarter = lap.map(|v| 0.25 * v);
        assert!(both.re().dist_sup(&quarter) < 1e-13);
        assert!(both.values.iter().all(|v| v.im.abs() < 1e-13));
    }

    #[test]
    fn hessian_of_cos_n1() {
        let g = grid(1, 16);
        let ops = SpectralOps::new(g);
        let f = ScalarField::from_fn(g, |x| x[0].cos());
        let h = ops.complex_hessian(&f);
        for (idx, m) in h.samples.iter().enumerate() {
            let x = g.coords(idx);
            assert!((m.get(0, 0).re + 0.25 * x[0].cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn hessian_matches_closed_form_and_is_hermitian() {
        let g = grid(2, 8);
        let ops = SpectralOps::new(g);
        let p = TrigPoly::parse("cos:1,0,1,0:0.2; sin:0,1,1,1:0.1; cos:2,-1,0,3:0.05", &g).unwrap();
        let h = ops.complex_hessian(&p.sample(&g));
        assert!(h.max_hermitian_defect() < 1e-12);
        for (idx, m) in h.samples.iter().enumerate() {
            let want = p.complex_hessian(2, &g.coords(idx));
            assert!(m.sub(&want).norm_max() < 1e-13);
        }
    }

    #[test]
    fn laplacian_constant_metric_cos() {
        let g = grid(1, 16);
        let ops = SpectralOps::new(g);
        let ginv = 2.5;
        let inv = MatrixField::constant(g, HermMat::scalar(1, ginv));
        let f = ScalarField::from_fn(g, |x| x[0].cos());
        let lap = ops.laplacian(&f, &inv).unwrap();
        let want = ScalarField::from_fn(g, |x| -0.25 * ginv * x[0].cos());
        assert!(lap.dist_sup(&want) < 1e-13);
    }

    #[test]
    fn mixed_partials_commute() {
        let g = grid(2, 8);
        let ops = SpectralOps::new(g);
        let p = TrigPoly::parse("cos:1,2,0,1:0.4; sin:3,1,-1,2:0.3", &g).unwrap();
        let f = p.sample(&g);
        let ab = ops.d_real(&ops.d_real(&f, 0), 3);
        let ba = ops.d_real(&ops.d_real(&f, 3), 0);
        assert!(ab.dist_sup(&ba) < 1e-12);
    }

    #[test]
    fn spectral_refinement_error_drops() {
        // analytic field: error falls by >= 10x per doubling until 1e-12
        let err_at = |pts| {
            let g = grid(1, pts);
            let ops = SpectralOps::new(g);
            let f = ScalarField::from_fn(g, |x| (0.8 * x[0].cos()).exp());
            let df = ops.d_real(&f, 0);
            let want = ScalarField::from_fn(g, |x| -0.8 * x[0].sin() * (0.8 * x[0].cos()).exp());
            df.dist_sup(&want)
        };
        let e8 = err_at(8);
        let e16 = err_at(16);
        assert!(e16 * 10.0 <= e8, "{e8} {e16}");
        assert!(err_at(32) < 1e-12);
    }

    #[test]
    fn tail_of_band_limited_field_is_zero() {
        let g = grid(1, 16);
        let ops = SpectralOps::new(g);
        let f = ScalarField::from_fn(g, |x| x[0].cos());
        assert!(ops.spectral_tail(&f) < 1e-14);
        let rough = ScalarField::from_fn(g, |x| (7.0 * x[1]).cos() + x[0].cos());
        assert!(ops.spectral_tail(&rough) > 0.5);
        assert_eq!(ops.spectral_tail(&ScalarField::constant(g, 2.0)), 0.0);
    }

    fn random_field(g: TorusGrid, seed: u64) -> ScalarField {
        crate::config::random_source(&g, 1.0, 4, seed).sample(&g)
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn derivatives_are_linear_and_commute(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0) {
            let g = grid(2, 8);
            let ops = SpectralOps::new(g);
            let (f, h) = (random_field(g, s1), random_field(g, s2));
            let combo = ScalarField::from_values(
                g,
                f.values.iter().zip(&h.values).map(|(x, y)| a * x + y).collect(),
            )
            .unwrap();
            for axis in 0..4 {
                let lhs = ops.d_real(&combo, axis);
                let (df, dh) = (ops.d_real(&f, axis), ops.d_real(&h, axis));
                for p in 0..g.len() {
                    proptest::prop_assert!((lhs.values[p] - a * df.values[p] - dh.values[p]).abs() <= 1e-12);
                }
                for other in 0..axis {
                    let ab = ops.d_real(&ops.d_real(&f, axis), other);
                    let ba = ops.d_real(&ops.d_real(&f, other), axis);
                    proptest::prop_assert!(ab.dist_sup(&ba) <= 1e-12);
                }
            }
        }

        #[test]
        fn complex_hessian_is_hermitian(seed in 0u64..1000) {
            let g = grid(2, 8);
            let hess = SpectralOps::new(g).complex_hessian(&random_field(g, seed));
            proptest::prop_assert!(hess.max_hermitian_defect() <= 1e-12);
        }
    }
}
