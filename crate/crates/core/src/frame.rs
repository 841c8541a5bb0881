//! Decomposition of a positive Hermitian matrix over a fixed frame of
//! rank-one projectors, `a = sum_nu beta_nu gamma_nu gamma_nu^*`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::herm::HermMat;

/// Halvings tried after the initial shift `lambda / (2 tr S)`.
pub const SHIFT_HALVINGS: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDecomposition {
    pub dim: usize,
    pub frame: Vec<Vec<Complex64>>,
    pub betas: Vec<f64>,
    /// `(C1, C2)` with `C1 <= beta <= C2`, valid for every matrix in the
    /// eigenvalue range that decomposes with the same shift.
    pub bounds: (f64, f64),
    pub shift: f64,
}

impl FrameDecomposition {
    pub fn reconstruct(&self) -> HermMat {
        reconstruct(self.dim, &self.frame, &self.betas)
    }
}

/// `{e_i}`, then `(e_i + e_j)/sqrt2` and `(e_i + i e_j)/sqrt2` for `i < j`.
pub fn standard_frame(n: usize) -> Vec<Vec<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut v = vec![zero; n];
        v[i] = Complex64::new(1.0, 0.0);
        out.push(v);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut v = vec![zero; n];
            v[i] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            v[j] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            out.push(v);
            let mut w = vec![zero; n];
            w[i] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            w[j] = Complex64::new(0.0, FRAC_1_SQRT_2);
            out.push(w);
        }
    }
    out
}

fn projector(n: usize, v: &[Complex64]) -> HermMat {
    let mut m = HermMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, v[i] * v[j].conj());
        }
    }
    m
}

pub fn reconstruct(n: usize, frame: &[Vec<Complex64>], betas: &[f64]) -> HermMat {
    frame
        .iter()
        .zip(betas)
        .fold(HermMat::zeros(n), |acc, (v, &b)| {
            acc.add(&projector(n, v).scale(b))
        })
}

/// Coefficients of `a` in the basis `{gamma gamma^*}` of Hermitian matrices.
pub fn basis_coefficients(a: &HermMat, frame: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    let n = a.dim();
    let m = n * n;
    if frame.len() != m {
        return Err(Error::InvalidArgument(format!(
            "frame has {} vectors, expected {m}",
            frame.len()
        )));
    }
    let mut sys = DMatrix::<f64>::zeros(m, m);
    let mut col = vec![0.0; m];
    for (c, v) in frame.iter().enumerate() {
        projector(n, v).pack_hermitian(&mut col);
        for r in 0..m {
            sys[(r, c)] = col[r];
        }
    }
    a.pack_hermitian(&mut col);
    let rhs = DVector::from_vec(col);
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("frame is not a basis".into()))?;
    Ok(sol.iter().copied().collect())
}

/// Decomposes `a`, whose eigenvalues must lie in `[lo, hi]`, over the
/// standard frame. The shifted matrix `a - delta S` is solved in the basis and
/// `delta` is added back; the first `delta` in the halving schedule whose
/// shifted coefficients are all positive is accepted, so every beta is at
/// least `delta`.
pub fn frame_decompose(a: &HermMat, eig_range: (f64, f64)) -> Result<FrameDecomposition> {
    let (lo, hi) = eig_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "invalid eigenvalue range [{lo}, {hi}]"
        )));
    }
    for ev in a.eigvals_desc() {
        if ev < lo || ev > hi {
            return Err(Error::EigRangeViolation { value: ev, lo, hi });
        }
    }
    let n = a.dim();
    let frame = standard_frame(n);
    let s = reconstruct(n, &frame, &vec![1.0; frame.len()]);
    let tr_s = s.trace().re;
    let mut delta = lo / (2.0 * tr_s);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..=SHIFT_HALVINGS {
        let shifted = basis_coefficients(&a.sub(&s.scale(delta)), &frame)?;
        let min = shifted.iter().copied().fold(f64::INFINITY, f64::min);
        best = best.max(min);
        if min > 0.0 {
            let betas: Vec<f64> = shifted.iter().map(|b| b + delta).collect();
            // |a_ij| <= (hi - lo)/2 off the diagonal bounds every coefficient
            let off = (n as f64 - 1.0) * (hi - lo) / std::f64::consts::SQRT_2;
            let c2 = (hi + off).max(hi - lo);
            return Ok(FrameDecomposition {
                dim: n,
                frame,
                betas,
                bounds: (delta, c2),
                shift: delta,
            });
        }
        delta *= 0.5;
    }
    Err(Error::ShiftFailure { min_beta: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_case() {
        let d = frame_decompose(&HermMat::scalar(1, 3.0), (1.0, 4.0)).unwrap();
        assert_eq!(d.frame.len(), 1);
        assert!((d.betas[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn frame_is_unit_and_contains_basis() {
        let f = standard_frame(2);
        assert_eq!(f.len(), 4);
        for v in &f {
            let nrm: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            assert!((nrm - 1.0).abs() < 1e-14);
        }
        assert_eq!(
            f[0],
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        );
        assert_eq!(
            f[1],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        );
    }

    #[test]
    fn identity_has_vanishing_coefficients() {
        // a basis expansion is unique, so the two mixed coefficients of I are zero
        let f = standard_frame(2);
        let b = basis_coefficients(&HermMat::identity(2), &f).unwrap();
        let expect = [1.0, 1.0, 0.0, 0.0];
        for (x, e) in b.iter().zip(expect) {
            assert!((x - e).abs() < 1e-14);
        }
        let r = frame_decompose(&HermMat::identity(2), (0.5, 2.0));
        assert!(matches!(r, Err(Error::ShiftFailure { .. })));
    }

    #[test]
    fn positive_mixed_entries_decompose() {
        let c = |re, im| Complex64::new(re, im);
        let a = HermMat::from_rows(&[&[c(2.0, 0.0), c(0.4, -0.3)], &[c(0.4, 0.3), c(1.5, 0.0)]]);
        let d = frame_decompose(&a, (0.5, 3.0)).unwrap();
        assert!(d.reconstruct().sub(&a).norm_max() < 1e-13);
        assert!(d.betas.iter().all(|&b| b >= d.bounds.0 && b <= d.bounds.1));
    }

    #[test]
    fn range_violation() {
        let a = HermMat::from_diag(&[0.1, 1.0]);
        assert!(matches!(
            frame_decompose(&a, (0.2, 5.0)),
            Err(Error::EigRangeViolation { .. })
        ));
    }

    proptest! {
        #[test]
        fn coefficients_reconstruct_and_are_lipschitz(
            d0 in 0.2f64..5.0, d1 in 0.2f64..5.0, re in -1.0f64..1.0, im in -1.0f64..1.0,
            p in -1e-3f64..1e-3,
        ) {
            let c = |a, b| Complex64::new(a, b);
            let a = HermMat::from_rows(&[&[c(d0, 0.0), c(re, im)], &[c(re, -im), c(d1, 0.0)]]);
            let f = standard_frame(2);
            let b = basis_coefficients(&a, &f).unwrap();
            prop_assert!(reconstruct(2, &f, &b).sub(&a).norm_max() <= 1e-12);
            let da = HermMat::from_rows(&[&[c(p, 0.0), c(p, -p)], &[c(p, p), c(0.0, 0.0)]]);
            let b2 = basis_coefficients(&a.add(&da), &f).unwrap();
            let db = b.iter().zip(&b2).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            prop_assert!(db <= 3.0 * da.norm_max() + 1e-15);
        }
    }
}
