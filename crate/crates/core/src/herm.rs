//! Small dense complex matrices (dimension 1 or 2) and the pointwise kernels
//! built on them: Cholesky, log-determinant ratios, inverses, trace pairings
//! and Hermitian eigen-decompositions.
//!
//! Complex dimension is at most two, so matrices live on the stack in a fixed
//! `2 x 2` buffer and only the leading `dim x dim` block is meaningful.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense `dim x dim` complex matrix with `dim <= 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat {
    dim: usize,
    e: [[Complex64; MAX_DIM]; MAX_DIM],
}

/// Hermitian matrices share the dense representation; producers keep
/// `e[i][j] == conj(e[j][i])`.
pub type HermMat = CMat;

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self {
            dim,
            e: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.e[i][i] = Complex64::new(s, 0.0);
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.e[i][i] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Row-major entries; `rows.len()` is the dimension.
    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), rows.len());
            for (j, &v) in r.iter().enumerate() {
                m.e[i][j] = v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.e[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.e[i][j] = v;
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.e[i][j] += o.e[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.e[i][j] *= s;
            }
        }
        m
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut s = ZERO;
                for k in 0..self.dim {
                    s += self.e[i][k] * o.e[k][j];
                }
                m.e[i][j] = s;
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> [Complex64; MAX_DIM] {
        let mut out = [ZERO; MAX_DIM];
        for i in 0..self.dim {
            for k in 0..self.dim {
                out[i] += self.e[i][k] * v[k];
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.e[i][j] = self.e[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.e[i][i]).sum()
    }

    pub fn det(&self) -> Complex64 {
        match self.dim {
            1 => self.e[0][0],
            _ => self.e[0][0] * self.e[1][1] - self.e[0][1] * self.e[1][0],
        }
    }

    /// Max-abs entry norm.
    pub fn norm_max(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.e[i][j].norm());
            }
        }
        m
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).norm_max()
    }

    /// Replace by `(A + A*)/2`.
    pub fn hermitize(&self) -> Self {
        self.add(&self.adjoint()).scale(0.5)
    }

    /// Lower Cholesky factor `L` with `A = L L*`; `None` unless positive definite.
    pub fn cholesky(&self) -> Option<Self> {
        let mut l = Self::zeros(self.dim);
        for j in 0..self.dim {
            let mut d = self.e[j][j].re;
            for k in 0..j {
                d -= l.e[j][k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let ljj = d.sqrt();
            l.e[j][j] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..self.dim {
                let mut s = self.e[i][j];
                for k in 0..j {
                    s -= l.e[i][k] * l.e[j][k].conj();
                }
                l.e[i][j] = s / ljj;
            }
        }
        Some(l)
    }

    /// `log det` of a positive-definite matrix from its Cholesky factor.
    pub fn log_det_hpd(&self) -> Option<f64> {
        let l = self.cholesky()?;
        Some((0..self.dim).map(|i| 2.0 * l.e[i][i].re.ln()).sum())
    }

    /// General inverse (dimension <= 2, closed form).
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let mut m = Self::zeros(self.dim);
        match self.dim {
            1 => m.e[0][0] = ONE / det,
            _ => {
                m.e[0][0] = self.e[1][1] / det;
                m.e[1][1] = self.e[0][0] / det;
                m.e[0][1] = -self.e[0][1] / det;
                m.e[1][0] = -self.e[1][0] / det;
            }
        }
        Some(m)
    }

    /// Inverse of a Hermitian positive-definite matrix; the result is
    /// hermitized so that round-off never breaks the symmetry.
    pub fn inverse_hpd(&self) -> Option<Self> {
        self.cholesky()?;
        self.inverse().map(|m| m.hermitize())
    }

    /// Eigen-decomposition of a Hermitian matrix. Eigenvalues are returned in
    /// descending order; column `k` of the returned matrix is the unit
    /// eigenvector of eigenvalue `k`.
    pub fn eigh_desc(&self) -> ([f64; MAX_DIM], Self) {
        if self.dim == 1 {
            return ([self.e[0][0].re, 0.0], Self::identity(1));
        }
        let a = self.e[0][0].re;
        let d = self.e[1][1].re;
        let c = self.e[0][1];
        let mean = 0.5 * (a + d);
        let half = 0.5 * (a - d);
        let r = half.hypot(c.norm());
        let (hi, lo) = (mean + r, mean - r);
        let mut v = Self::zeros(2);
        if c.norm() <= 1e-300 {
            // already diagonal; keep first occurrence first on ties
            if a >= d {
                v.e[0][0] = ONE;
                v.e[1][1] = ONE;
                return ([a, d], v);
            }
            v.e[1][0] = ONE;
            v.e[0][1] = ONE;
            return ([d, a], v);
        }
        for (k, lam) in [hi, lo].into_iter().enumerate() {
            // two algebraically equivalent null vectors of (A - lam I); keep the better conditioned one
            let v1 = [c, Complex64::new(lam - a, 0.0)];
            let v2 = [Complex64::new(lam - d, 0.0), c.conj()];
            let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
            let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
            let (w, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
            v.e[0][k] = w[0] / n;
            v.e[1][k] = w[1] / n;
        }
        ([hi, lo], v)
    }

    /// Eigenvalues of a Hermitian matrix, descending.
    pub fn eigvals_desc(&self) -> Vec<f64> {
        let (ev, _) = self.eigh_desc();
        ev[..self.dim].to_vec()
    }

    pub fn min_eig(&self) -> f64 {
        let ev = self.eigvals_desc();
        ev[ev.len() - 1]
    }

    /// Packs the Hermitian matrix into `dim*dim` reals: diagonal entries, then
    /// `(re, im)` of each strictly upper entry.
    pub fn pack_hermitian(&self, out: &mut [f64]) {
        match self.dim {
            1 => out[0] = self.e[0][0].re,
            _ => {
                out[0] = self.e[0][0].re;
                out[1] = self.e[1][1].re;
                out[2] = self.e[0][1].re;
                out[3] = self.e[0][1].im;
            }
        }
    }

    pub fn unpack_hermitian(dim: usize, v: &[f64]) -> Self {
        let mut m = Self::zeros(dim);
        if dim == 1 {
            m.e[0][0] = Complex64::new(v[0], 0.0);
        } else {
            m.e[0][0] = Complex64::new(v[0], 0.0);
            m.e[1][1] = Complex64::new(v[1], 0.0);
            m.e[0][1] = Complex64::new(v[2], v[3]);
            m.e[1][0] = Complex64::new(v[2], -v[3]);
        }
        m
    }
}

/// `log det gp - log det g` for positive-definite `gp`, `g`.
pub fn log_det_ratio(gp: &HermMat, g: &HermMat) -> Result<f64> {
    let a = gp.log_det_hpd().ok_or(Error::PositivityViolation {
        index: 0,
        min_eig: gp.min_eig(),
    })?;
    let b = g.log_det_hpd().ok_or(Error::PositivityViolation {
        index: 0,
        min_eig: g.min_eig(),
    })?;
    Ok(a - b)
}

/// `log det(g + h) - log det g` as `log det(I + g^{-1} h)`, accurate when
/// `h` is small against `g`. `None` outside the positive cone.
pub fn log_det_increment(g_inv: &HermMat, g_det: f64, h: &HermMat) -> Option<f64> {
    let a = g_inv.mul(h);
    let s = match h.dim() {
        1 => a.get(0, 0).re,
        _ => a.trace().re + h.det().re / g_det,
    };
    if s > -1.0 {
        Some(s.ln_1p())
    } else {
        None
    }
}

/// `Re tr(g_inv * gp)`, i.e. `g^{i j-bar} gp_{i j-bar}` when `g_inv` is the
/// matrix inverse of `g`.
pub fn trace_pair(g_inv: &HermMat, gp: &HermMat) -> f64 {
    let n = g_inv.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (g_inv.get(i, j) * gp.get(j, i)).re;
        }
    }
    s
}

/// Eigenvalues of `g^{-1} gp` (both Hermitian, `g` positive definite),
/// descending. Computed as eigenvalues of `L^{-1} gp L^{-*}`.
pub fn relative_eigs(g: &HermMat, gp: &HermMat) -> Option<Vec<f64>> {
    let l = g.cholesky()?;
    let li = l.inverse()?;
    let m = li.mul(gp).mul(&li.adjoint()).hermitize();
    Some(m.eigvals_desc())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample_pd() -> HermMat {
        HermMat::from_rows(&[&[c(2.0, 0.0), c(0.3, -0.4)], &[c(0.3, 0.4), c(1.5, 0.0)]])
    }

    #[test]
    fn log_det_ratio_identity_and_scaling() {
        let g = sample_pd();
        assert_eq!(log_det_ratio(&g, &g).unwrap(), 0.0);
        let r = log_det_ratio(&g.scale(2.0), &g).unwrap();
        assert!((r - 2.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_det_increment_matches_ratio() {
        let g = HermMat::from_rows(&[&[c(1.2, 0.0), c(0.1, 0.2)], &[c(0.1, -0.2), c(0.9, 0.0)]]);
        let h = HermMat::from_rows(&[&[c(0.3, 0.0), c(-0.2, 0.1)], &[c(-0.2, -0.1), c(-0.4, 0.0)]]);
        let inc = log_det_increment(&g.inverse().unwrap(), g.det().re, &h).unwrap();
        let r = log_det_ratio(&g.add(&h), &g).unwrap();
        assert!((inc - r).abs() < 1e-14);
        assert!(log_det_increment(&g.inverse().unwrap(), g.det().re, &g.scale(-1.0)).is_none());
    }

    #[test]
    fn log_det_ratio_matches_closed_form_determinant() {
        let gp = sample_pd();
        let g = HermMat::from_rows(&[&[c(1.2, 0.0), c(0.1, 0.2)], &[c(0.1, -0.2), c(0.9, 0.0)]]);
        let direct = |m: &HermMat| (m.get(0, 0).re * m.get(1, 1).re - m.get(0, 1).norm_sqr()).ln();
        let want = direct(&gp) - direct(&g);
        assert!((log_det_ratio(&gp, &g).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn log_det_ratio_rejects_indefinite() {
        let bad = HermMat::from_diag(&[1.0, -0.5]);
        assert!(matches!(
            log_det_ratio(&bad, &HermMat::identity(2)),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn log_det_no_overflow() {
        let huge = HermMat::from_diag(&[1e300, 1e300]);
        let ld = huge.log_det_hpd().unwrap();
        assert!((ld - 2.0 * 300.0 * 10f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn trace_pair_basic() {
        assert_eq!(
            trace_pair(&HermMat::identity(2), &HermMat::identity(2)),
            2.0
        );
        assert_eq!(
            trace_pair(&HermMat::identity(2), &HermMat::from_diag(&[3.0, 4.5])),
            7.5
        );
    }

    #[test]
    fn eigh_reconstructs() {
        let a = sample_pd();
        let (ev, v) = a.eigh_desc();
        assert!(ev[0] >= ev[1]);
        let d = HermMat::from_diag(&ev);
        let back = v.mul(&d).mul(&v.adjoint());
        assert!(back.sub(&a).norm_max() < 1e-14);
        let vv = v.adjoint().mul(&v);
        assert!(vv.sub(&HermMat::identity(2)).norm_max() < 1e-14);
    }

    #[test]
    fn eigh_diagonal_tie_keeps_order() {
        let (ev, v) = HermMat::from_diag(&[2.0, 2.0]).eigh_desc();
        assert_eq!(ev, [2.0, 2.0]);
        assert_eq!(v, HermMat::identity(2));
        let (ev, v) = HermMat::from_diag(&[1.0, 3.0]).eigh_desc();
        assert_eq!(ev, [3.0, 1.0]);
        assert_eq!(v.get(1, 0), ONE);
    }

    #[test]
    fn inverse_hpd_is_inverse() {
        let a = sample_pd();
        let ai = a.inverse_hpd().unwrap();
        assert!(a.mul(&ai).sub(&HermMat::identity(2)).norm_max() < 1e-14);
        assert!(ai.hermitian_defect() == 0.0);
    }

    #[test]
    fn pack_roundtrip() {
        let a = sample_pd();
        let mut buf = [0.0; 4];
        a.pack_hermitian(&mut buf);
        assert_eq!(HermMat::unpack_hermitian(2, &buf), a);
    }

    /// `L L* + 0.05 I` with `L` lower triangular, always positive definite.
    fn pd_from(v: [f64; 4]) -> HermMat {
        let l = HermMat::from_rows(&[&[c(v[0], 0.0), c(0.0, 0.0)], &[c(v[1], v[2]), c(v[3], 0.0)]]);
        l.mul(&l.adjoint())
            .hermitize()
            .add(&HermMat::scalar(2, 0.05))
    }

    fn pd_strategy() -> impl proptest::strategy::Strategy<Value = HermMat> {
        use proptest::prelude::*;
        [-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0].prop_map(pd_from)
    }

    proptest::proptest! {
        #[test]
        fn log_det_ratio_cocycle(a in pd_strategy(), b in pd_strategy(), g in pd_strategy()) {
            let ab = log_det_ratio(&a, &b).unwrap();
            let bg = log_det_ratio(&b, &g).unwrap();
            let ag = log_det_ratio(&a, &g).unwrap();
            proptest::prop_assert!((ab + bg - ag).abs() <= 1e-12, "{}", ab + bg - ag);
        }

        #[test]
        fn increment_agrees_with_ratio(g in pd_strategy(), gp in pd_strategy()) {
            let h = gp.sub(&g);
            let inc = log_det_increment(&g.inverse_hpd().unwrap(), g.det().re, &h).unwrap();
            let r = log_det_ratio(&gp, &g).unwrap();
            proptest::prop_assert!((inc - r).abs() <= 1e-10 * (1.0 + r.abs()), "{inc} vs {r}");
        }
    }
}
