//! Closed-form real trigonometric polynomials on the torus.
//!
//! These are used for source terms, manufactured potentials and metric
//! coefficients, and give exact derivatives to compare spectral results
//! against.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::herm::HermMat;

/// `cos_coef * cos(k.x) + sin_coef * sin(k.x)` with `x` scaled by `2pi/L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: [i32; 4],
    pub cos_coef: f64,
    pub sin_coef: f64,
}

impl TrigMode {
    pub fn cos(k: [i32; 4], c: f64) -> Self {
        Self {
            k,
            cos_coef: c,
            sin_coef: 0.0,
        }
    }

    pub fn sin(k: [i32; 4], c: f64) -> Self {
        Self {
            k,
            cos_coef: 0.0,
            sin_coef: c,
        }
    }

    fn phase(&self, x: &[f64; 4], ks: f64) -> f64 {
        (0..4).map(|a| self.k[a] as f64 * ks * x[a]).sum()
    }

    /// Value and the `(cos, sin)` of the phase.
    fn parts(&self, x: &[f64; 4], ks: f64) -> (f64, f64) {
        let p = self.phase(x, ks);
        (p.cos(), p.sin())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub modes: Vec<TrigMode>,
    /// Angular scale `2pi/L` applied to every wavevector.
    pub k_scale: f64,
}

impl TrigPoly {
    pub fn new(modes: Vec<TrigMode>, grid: &TorusGrid) -> Self {
        Self {
            modes,
            k_scale: grid.k_scale(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| TrigMode {
                k: m.k,
                cos_coef: m.cos_coef * s,
                sin_coef: m.sin_coef * s,
            })
            .collect();
        Self {
            modes,
            k_scale: self.k_scale,
        }
    }

    pub fn eval(&self, x: &[f64; 4]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (c, s) = m.parts(x, self.k_scale);
                m.cos_coef * c + m.sin_coef * s
            })
            .sum()
    }

    /// Exact derivative along real axis `a`.
    pub fn d(&self, a: usize, x: &[f64; 4]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (c, s) = m.parts(x, self.k_scale);
                let ka = m.k[a] as f64 * self.k_scale;
                ka * (-m.cos_coef * s + m.sin_coef * c)
            })
            .sum()
    }

    /// Exact second derivative along real axes `a`, `b`.
    pub fn dd(&self, a: usize, b: usize, x: &[f64; 4]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (c, s) = m.parts(x, self.k_scale);
                let kk = m.k[a] as f64 * m.k[b] as f64 * self.k_scale * self.k_scale;
                -kk * (m.cos_coef * c + m.sin_coef * s)
            })
            .sum()
    }

    /// Exact complex Hessian `d_i d_{j-bar} f` with `d_i = (d_{2i} - i d_{2i+1})/2`.
    pub fn complex_hessian(&self, n: usize, x: &[f64; 4]) -> HermMat {
        let mut h = HermMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let (a, b, c, d) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
                let re = self.dd(a, c, x) + self.dd(b, d, x);
                let im = self.dd(a, d, x) - self.dd(b, c, x);
                h.set(i, j, Complex64::new(0.25 * re, 0.25 * im));
            }
        }
        h
    }

    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        ScalarField::from_fn(*grid, |x| self.eval(x))
    }

    /// Largest `|k|_inf` among the modes.
    pub fn max_wavenumber(&self) -> i32 {
        self.modes
            .iter()
            .flat_map(|m| m.k.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Parses `cos:1,0:0.01; sin:1,1:0.005`: kind, wavevector, coefficient.
    /// Missing wavevector components default to zero.
    pub fn parse(spec: &str, grid: &TorusGrid) -> Result<Self> {
        let mut modes = Vec::new();
        for raw in spec.split(';') {
            let item = raw.trim();
            if item.is_empty() {
                continue;
            }
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("malformed trig mode '{item}'")));
            }
            let mut k = [0i32; 4];
            for (a, tok) in parts[1].split(',').enumerate() {
                if a >= grid.real_dim() {
                    return Err(Error::Config(format!(
                        "wavevector '{}' has more than {} components",
                        parts[1],
                        grid.real_dim()
                    )));
                }
                k[a] = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad wavenumber '{tok}'")))?;
            }
            let c: f64 = parts[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad coefficient '{}'", parts[2])))?;
            let mode = match parts[0] {
                "cos" => TrigMode::cos(k, c),
                "sin" => TrigMode::sin(k, c),
                other => return Err(Error::Config(format!("unknown trig kind '{other}'"))),
            };
            modes.push(mode);
        }
        Ok(Self::new(modes, grid))
    }
}
