//! Periodic uniform grid on the real `2n`-torus and the fields sampled on it.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest grid the library will allocate (points, not bytes).
pub const DEFAULT_POINT_BUDGET: usize = 1 << 22;

/// Uniform periodic grid: `2n` real axes of `N` points each, period `L`.
///
/// Real axis `2i` carries `Re z^i`, axis `2i+1` carries `Im z^i`. Storage is
/// row-major with axis 0 slowest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub complex_dim: usize,
    pub points_per_axis: usize,
    pub period: f64,
}

impl TorusGrid {
    pub fn new(complex_dim: usize, points_per_axis: usize, period: f64) -> Result<Self> {
        Self::with_budget(complex_dim, points_per_axis, period, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(
        complex_dim: usize,
        points_per_axis: usize,
        period: f64,
        budget: usize,
    ) -> Result<Self> {
        if !(1..=2).contains(&complex_dim) {
            return Err(Error::InvalidArgument(format!(
                "complex dimension must be 1 or 2, got {complex_dim}"
            )));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "points per axis must be even and >= 8, got {points_per_axis}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period}"
            )));
        }
        let total = (points_per_axis as u128).pow(2 * complex_dim as u32);
        if total > budget as u128 {
            return Err(Error::InvalidArgument(format!(
                "grid of {total} points exceeds the budget of {budget}"
            )));
        }
        Ok(Self {
            complex_dim,
            points_per_axis,
            period,
        })
    }

    /// Standard `2pi`-periodic grid.
    pub fn standard(complex_dim: usize, points_per_axis: usize) -> Result<Self> {
        Self::new(complex_dim, points_per_axis, 2.0 * PI)
    }

    #[inline]
    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.real_dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.period / self.points_per_axis as f64
    }

    /// Lebesgue volume of one grid cell, `h^{2n}`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.real_dim() as i32)
    }

    /// Multi-index of a flat index, axis 0 first.
    pub fn unravel(&self, mut idx: usize) -> [usize; 4] {
        let n = self.points_per_axis;
        let d = self.real_dim();
        let mut out = [0usize; 4];
        for a in (0..d).rev() {
            out[a] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn ravel(&self, mi: &[usize]) -> usize {
        let n = self.points_per_axis;
        mi.iter()
            .take(self.real_dim())
            .fold(0, |acc, &i| acc * n + (i % n))
    }

    /// Real coordinates of a grid point.
    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let h = self.spacing();
        let mi = self.unravel(idx);
        let mut x = [0.0; 4];
        for a in 0..self.real_dim() {
            x[a] = mi[a] as f64 * h;
        }
        x
    }

    /// Euclidean distance on the torus (minimum image per axis).
    pub fn torus_distance(&self, p: usize, q: usize) -> f64 {
        let a = self.unravel(p);
        let b = self.unravel(q);
        let n = self.points_per_axis as i64;
        let h = self.spacing();
        let mut s = 0.0;
        for ax in 0..self.real_dim() {
            let mut d = (a[ax] as i64 - b[ax] as i64).rem_euclid(n);
            if d > n / 2 {
                d = n - d;
            }
            let dx = d as f64 * h;
            s += dx * dx;
        }
        s.sqrt()
    }

    /// Index shifted by `delta` along `axis` (periodic).
    pub fn shifted(&self, idx: usize, axis: usize, delta: i64) -> usize {
        let mut mi = self.unravel(idx);
        let n = self.points_per_axis as i64;
        mi[axis] = (mi[axis] as i64 + delta).rem_euclid(n) as usize;
        self.ravel(&mi)
    }

    /// Signed integer wavenumber of FFT bin `k`; the Nyquist bin is `+N/2`.
    #[inline]
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.points_per_axis;
        if k <= n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    #[inline]
    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.points_per_axis / 2
    }

    /// Angular wavenumber scale `2 pi / L`.
    #[inline]
    pub fn k_scale(&self) -> f64 {
        2.0 * PI / self.period
    }
}

/// Real field sampled on a torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 4]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn check_grid(&self, other: &TorusGrid) -> Result<()> {
        if &self.grid != other {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn add_scaled(&self, s: f64, o: &ScalarField) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| a + s * b)
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shift(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    pub fn dist_sup(&self, o: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&o.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Complex field sampled on a torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: TorusGrid,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_real(f: &ScalarField) -> Self {
        Self {
            grid: f.grid,
            values: f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn re(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn dist_sup(&self, o: &ComplexField) -> f64 {
        self.values
            .iter()
            .zip(&o.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
    }
}
