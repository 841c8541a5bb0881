//! Holomorphic coordinates centered at a point in which the metric is the
//! identity, the complex Hessian of the potential is diagonal and the first
//! derivatives of the diagonal metric entries vanish.
//!
//! Old coordinates `z` relate to new ones `w` through
//! `z = A (w + b(w, w) / 2)` with `b^i_{jk}` symmetric in `(j, k)`. A matrix
//! `m_{i j-bar}` pulls back as `J^T m conj(J)` where `J = dz/dw`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::herm::{CMat, HermMat, MAX_DIM};

type Tensor3 = [[[Complex64; MAX_DIM]; MAX_DIM]; MAX_DIM];

#[derive(Clone, Debug, PartialEq)]
pub struct NormalFrame {
    pub base_point: usize,
    /// `A`, new to old coordinates at first order.
    pub linear_map: CMat,
    /// `b[i][j][k]`.
    pub quadratic_coeffs: Tensor3,
    /// Diagonal of the pulled-back Hessian, descending.
    pub hessian_diag: Vec<f64>,
}

fn transpose(m: &CMat) -> CMat {
    m.adjoint().conj_entries()
}

trait ConjEntries {
    fn conj_entries(&self) -> Self;
}

impl ConjEntries for CMat {
    fn conj_entries(&self) -> Self {
        let n = self.dim();
        let mut o = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                o.set(i, j, self.get(i, j).conj());
            }
        }
        o
    }
}

/// `J^T m conj(J)`.
pub fn pull_back(m: &CMat, jac: &CMat) -> CMat {
    transpose(jac).mul(m).mul(&jac.conj_entries())
}

impl NormalFrame {
    pub fn dim(&self) -> usize {
        self.linear_map.dim()
    }

    /// `v = w + b(w, w) / 2` in the intermediate coordinates.
    fn quadratic(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = w[i];
                for j in 0..n {
                    for k in 0..n {
                        s += 0.5 * self.quadratic_coeffs[i][j][k] * w[j] * w[k];
                    }
                }
                s
            })
            .collect()
    }

    /// Old coordinates of the new point `w`.
    pub fn to_old(&self, w: &[Complex64]) -> Vec<Complex64> {
        let v = self.quadratic(w);
        self.linear_map.mul_vec(&v)[..self.dim()].to_vec()
    }

    /// `dz/dw` at `w`.
    pub fn jacobian(&self, w: &[Complex64]) -> CMat {
        let n = self.dim();
        let mut q = CMat::identity(n);
        for i in 0..n {
            for p in 0..n {
                let mut s = q.get(i, p);
                for k in 0..n {
                    s += self.quadratic_coeffs[i][p][k] * w[k];
                }
                q.set(i, p, s);
            }
        }
        self.linear_map.mul(&q)
    }
}

/// Builds normal coordinates from the metric `g0`, its holomorphic
/// derivatives `dg0[k] = d_k g` and the complex Hessian `hess0` at a point.
pub fn normal_frame(g0: &HermMat, dg0: &[CMat], hess0: &HermMat) -> Result<NormalFrame> {
    normal_frame_at(0, g0, dg0, hess0)
}

pub fn normal_frame_at(
    base_point: usize,
    g0: &HermMat,
    dg0: &[CMat],
    hess0: &HermMat,
) -> Result<NormalFrame> {
    let n = g0.dim();
    if dg0.len() != n || hess0.dim() != n {
        return Err(Error::InvalidArgument(
            "metric jet has inconsistent dimensions".into(),
        ));
    }
    // g0 = C C^*, so B = C^{-*} gives B^* g0 B = I
    let c = g0.cholesky().ok_or(Error::PositivityViolation {
        index: base_point,
        min_eig: g0.min_eig(),
    })?;
    let c_inv = c.inverse().ok_or(Error::PositivityViolation {
        index: base_point,
        min_eig: g0.min_eig(),
    })?;
    let l = c_inv.adjoint();
    let (ev, u) = l.adjoint().mul(hess0).mul(&l).hermitize().eigh_desc();
    // pull-backs use J^T m conj(J), so the map is the conjugate of B = L U
    let linear_map = l.mul(&u).conj_entries();

    // derivatives after the linear stage: d~_k = sum_c A_{ck} A^T dg_c conj(A)
    let a = &linear_map;
    let mut dt = vec![CMat::zeros(n); n];
    for (k, out) in dt.iter_mut().enumerate() {
        for (cc, dgc) in dg0.iter().enumerate() {
            let t = pull_back(dgc, a);
            let coef = a.get(cc, k);
            for i in 0..n {
                for j in 0..n {
                    out.set(i, j, out.get(i, j) + coef * t.get(i, j));
                }
            }
        }
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut b = [[[zero; MAX_DIM]; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for k in 0..n {
            let v = -dt[k].get(i, i);
            b[i][i][k] = v;
            b[i][k][i] = v;
        }
    }

    Ok(NormalFrame {
        base_point,
        linear_map,
        quadratic_coeffs: b,
        hessian_diag: ev[..n].to_vec(),
    })
}

/// Metric `g(z) = g0 + sum_k (z_k D_k + conj(z_k) D_k^*)`, the first-order
/// Hermitian field with `d_k g = D_k` at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMetricJet {
    pub g0: HermMat,
    pub dg: Vec<CMat>,
}

impl LinearMetricJet {
    pub fn eval(&self, z: &[Complex64]) -> HermMat {
        let mut g = self.g0;
        for (k, d) in self.dg.iter().enumerate() {
            let n = g.dim();
            for i in 0..n {
                for j in 0..n {
                    let v = z[k] * d.get(i, j) + z[k].conj() * d.get(j, i).conj();
                    g.set(i, j, g.get(i, j) + v);
                }
            }
        }
        g
    }

    /// Metric in the new coordinates at `w`.
    pub fn pulled_back(&self, frame: &NormalFrame, w: &[Complex64]) -> HermMat {
        pull_back(&self.eval(&frame.to_old(w)), &frame.jacobian(w))
    }

    /// Largest `|d_k g_{i i-bar}|` at the origin of the new coordinates, by
    /// fourth-order central differences with step `h`.
    pub fn fd_diagonal_derivative(&self, frame: &NormalFrame, h: f64) -> f64 {
        let n = frame.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            for i in 0..n {
                let along = |dir: Complex64| {
                    let f = |s: f64| {
                        let mut w = vec![Complex64::new(0.0, 0.0); n];
                        w[k] = dir * s;
                        self.pulled_back(frame, &w).get(i, i).re
                    };
                    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
                };
                let dx = along(Complex64::new(1.0, 0.0));
                let dy = along(Complex64::new(0.0, 1.0));
                worst = worst.max(Complex64::new(0.5 * dx, -0.5 * dy).norm());
            }
        }
        worst
    }
}

/// Largest off-diagonal modulus.
pub fn off_diagonal(m: &CMat) -> f64 {
    let n = m.dim();
    let mut w = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w = w.max(m.get(i, j).norm());
            }
        }
    }
    w
}
