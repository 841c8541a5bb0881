//! Time integration of `d phi/dt = log det(g + dd-bar phi)/det g - F` from
//! `phi = 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::herm::{log_det_increment, HermMat};
use crate::metric::{integrate, MetricField, VolumeWeights};
use crate::spectral::{MatrixField, SpectralOps};

pub const TAIL_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Linearly implicit step stabilized by a flat Laplacian; unconditionally
    /// stable, first order in time, exact steady states.
    SemiImplicit,
    /// Classical RK4 with `dt <= cfl h^2 / max tr(g'^{-1})`.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub scheme: Scheme,
    pub cfl_factor: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Lower bound on the eigenvalues of `g^{-1} g'`.
    pub eps_pd: f64,
    pub retry_limit: u32,
    pub snapshot_interval: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            scheme: Scheme::SemiImplicit,
            cfl_factor: 0.2,
            dt_min: 1e-12,
            dt_max: 2e-3,
            eps_pd: 1e-6,
            retry_limit: 20,
            snapshot_interval: 0.1,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_max
            && self.cfl_factor > 0.0
            && self.cfl_factor <= 1.0
            && self.eps_pd > 0.0
            && self.snapshot_interval > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid step control {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub phi: ScalarField,
    pub phi_tilde: ScalarField,
    /// `integrate(phi)`; `phi = phi_tilde + phi_mean`.
    pub phi_mean: f64,
    pub gprime: MatrixField,
    pub dphi_dt: ScalarField,
    pub step_count: u64,
    /// Total dt halvings so far.
    pub halvings: u64,
    /// Smallest eigenvalue of `g^{-1} g'` over the grid.
    pub min_rel_eig: f64,
    /// Largest eigenvalue of `g'^{-1}` over the grid.
    pub max_inv_eig: f64,
    /// Largest `tr(g'^{-1})` over the grid.
    pub max_inv_trace: f64,
}

/// Right-hand side and the assembled `g'` at every point.
#[derive(Clone, Debug)]
pub struct RhsEval {
    pub rhs: ScalarField,
    pub gprime: MatrixField,
    pub min_rel_eig: f64,
    pub max_inv_eig: f64,
    pub max_inv_trace: f64,
}

/// Smallest eigenvalue of `g^{-1} gp` from the characteristic polynomial.
fn relative_min_eig(gi: &HermMat, g_det: f64, gp: &HermMat) -> f64 {
    if gp.dim() == 1 {
        return gp.get(0, 0).re * gi.get(0, 0).re;
    }
    let tr = gi.mul(gp).trace().re;
    let det = gp.det().re / g_det;
    let disc = (0.25 * tr * tr - det).max(0.0);
    let lo = 0.5 * tr - disc.sqrt();
    // the smaller root loses precision when it is tiny; recover it from the product
    let hi = 0.5 * tr + disc.sqrt();
    if lo.abs() < 1e-3 * hi {
        det / hi
    } else {
        lo
    }
}

/// Fixed data of one flow problem.
pub struct FlowProblem {
    pub grid: TorusGrid,
    pub metric: MetricField,
    pub f: ScalarField,
    pub ops: SpectralOps,
    pub weights: VolumeWeights,
    g_inv: Vec<HermMat>,
    g_det: Vec<f64>,
}

impl std::fmt::Debug for FlowProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowProblem")
            .field("grid", &self.grid)
            .finish()
    }
}

impl FlowProblem {
    pub fn new(metric: MetricField, f: ScalarField) -> Result<Self> {
        f.check_grid(&metric.grid)?;
        let grid = metric.grid;
        let g_inv = metric.inverse()?.samples;
        let g_det = metric.samples.samples.iter().map(|g| g.det().re).collect();
        Ok(Self {
            grid,
            weights: metric.weights(),
            ops: SpectralOps::new(grid),
            metric,
            f,
            g_inv,
            g_det,
        })
    }

    /// `g + dd-bar phi`, the log-det ratio minus `F`, and eigenvalue extremes.
    pub fn eval(&self, phi: &ScalarField) -> Result<RhsEval> {
        phi.check_grid(&self.grid)?;
        // the mean does not enter the Hessian but its rounding would
        let mean = phi.values.iter().sum::<f64>() / phi.values.len() as f64;
        let hess = self.ops.complex_hessian(&phi.shift(-mean));
        let g = &self.metric.samples.samples;
        let per_point: Vec<Result<(f64, HermMat, f64, f64, f64)>> = hess
            .samples
            .par_iter()
            .enumerate()
            .map(|(index, h)| {
                let h = h.hermitize();
                let gp = g[index].add(&h);
                let violation = || Error::PositivityViolation {
                    index,
                    min_eig: gp.min_eig(),
                };
                gp.cholesky().ok_or_else(violation)?;
                let ld = log_det_increment(&self.g_inv[index], self.g_det[index], &h)
                    .ok_or_else(violation)?;
                let inv = gp.inverse_hpd().ok_or_else(violation)?;
                let rel = relative_min_eig(&self.g_inv[index], self.g_det[index], &gp);
                let inv_eig = 1.0 / gp.min_eig();
                let inv_tr = inv.trace().re;
                Ok((ld - self.f.values[index], gp, rel, inv_eig, inv_tr))
            })
            .collect();
        let mut rhs = Vec::with_capacity(self.grid.len());
        let mut gps = Vec::with_capacity(self.grid.len());
        let (mut rel, mut inv_eig, mut inv_tr) = (f64::INFINITY, 0.0f64, 0.0f64);
        for r in per_point {
            let (v, gp, re, ie, it) = r?;
            rhs.push(v);
            gps.push(gp);
            rel = rel.min(re);
            inv_eig = inv_eig.max(ie);
            inv_tr = inv_tr.max(it);
        }
        Ok(RhsEval {
            rhs: ScalarField {
                grid: self.grid,
                values: rhs,
            },
            gprime: MatrixField {
                grid: self.grid,
                samples: gps,
            },
            min_rel_eig: rel,
            max_inv_eig: inv_eig,
            max_inv_trace: inv_tr,
        })
    }

    /// Pointwise inverse of the background metric.
    pub fn g_inv(&self) -> &[HermMat] {
        &self.g_inv
    }

    pub fn normalize(&self, phi: &ScalarField) -> Result<ScalarField> {
        let mean = integrate(phi, &self.weights)?;
        Ok(phi.shift(-mean))
    }

    /// State at `phi` with all cached quantities recomputed.
    pub fn state_at(&self, t: f64, phi: ScalarField) -> Result<FlowState> {
        let e = self.eval(&phi)?;
        let phi_mean = integrate(&phi, &self.weights)?;
        Ok(FlowState {
            t,
            phi_tilde: phi.shift(-phi_mean),
            phi_mean,
            phi,
            gprime: e.gprime,
            dphi_dt: e.rhs,
            step_count: 0,
            halvings: 0,
            min_rel_eig: e.min_rel_eig,
            max_inv_eig: e.max_inv_eig,
            max_inv_trace: e.max_inv_trace,
        })
    }

    pub fn initial_state(&self) -> Result<FlowState> {
        self.state_at(0.0, ScalarField::zeros(self.grid))
    }

    /// Largest step the scheme allows at `state`.
    pub fn stable_dt(&self, state: &FlowState, ctrl: &StepControl) -> f64 {
        match ctrl.scheme {
            Scheme::SemiImplicit => ctrl.dt_max,
            Scheme::Rk4 => {
                let h = self.grid.spacing();
                ctrl.dt_max
                    .min(ctrl.cfl_factor * h * h / state.max_inv_trace)
            }
        }
    }

    /// Increment `phi(t + dt) - phi(t)` and the evaluation at the new point.
    /// Works on `phi-tilde`, which has the same Hessian as `phi`.
    fn trial(
        &self,
        state: &FlowState,
        dt: f64,
        ctrl: &StepControl,
    ) -> Result<(ScalarField, RhsEval)> {
        let base = &state.phi_tilde;
        let delta = match ctrl.scheme {
            Scheme::SemiImplicit => {
                let c = state.max_inv_eig;
                let spec = self.ops.forward(&state.dphi_dt);
                let out = self.ops.apply_symbol(&spec, |w| {
                    Complex64::new(dt / (1.0 + dt * c * 0.25 * w.k2()), 0.0)
                });
                ScalarField {
                    grid: self.grid,
                    values: out.into_iter().map(|d| d.re).collect(),
                }
            }
            Scheme::Rk4 => {
                let k1 = &state.dphi_dt;
                let k2 = self.checked(&base.add_scaled(0.5 * dt, k1), ctrl)?.rhs;
                let k3 = self.checked(&base.add_scaled(0.5 * dt, &k2), ctrl)?.rhs;
                let k4 = self.checked(&base.add_scaled(dt, &k3), ctrl)?.rhs;
                let values = (0..self.grid.len())
                    .map(|i| {
                        dt / 6.0
                            * (k1.values[i]
                                + 2.0 * k2.values[i]
                                + 2.0 * k3.values[i]
                                + k4.values[i])
                    })
                    .collect();
                ScalarField {
                    grid: self.grid,
                    values,
                }
            }
        };
        let e = self.checked(&base.add_scaled(1.0, &delta), ctrl)?;
        Ok((delta, e))
    }

    fn checked(&self, phi: &ScalarField, ctrl: &StepControl) -> Result<RhsEval> {
        let e = self.eval(phi)?;
        if e.min_rel_eig < ctrl.eps_pd || !e.rhs.is_finite() {
            return Err(Error::PositivityViolation {
                index: argmin_rel(self, &e),
                min_eig: e.min_rel_eig,
            });
        }
        Ok(e)
    }

    /// One step of at most `dt_cap`, halving on positivity failures.
    pub fn step(&self, state: &FlowState, ctrl: &StepControl, dt_cap: f64) -> Result<FlowState> {
        let mut dt = self.stable_dt(state, ctrl).min(dt_cap);
        let mut halvings = 0u32;
        loop {
            match self.trial(state, dt, ctrl) {
                Ok((delta, e)) => {
                    let dmean = integrate(&delta, &self.weights)?;
                    let phi_tilde = state.phi_tilde.add_scaled(1.0, &delta.shift(-dmean));
                    let phi_mean = state.phi_mean + dmean;
                    return Ok(FlowState {
                        t: state.t + dt,
                        phi: phi_tilde.shift(phi_mean),
                        phi_tilde,
                        phi_mean,
                        gprime: e.gprime,
                        dphi_dt: e.rhs,
                        step_count: state.step_count + 1,
                        halvings: state.halvings + halvings as u64,
                        min_rel_eig: e.min_rel_eig,
                        max_inv_eig: e.max_inv_eig,
                        max_inv_trace: e.max_inv_trace,
                    });
                }
                Err(Error::PositivityViolation { index, .. }) => {
                    if halvings >= ctrl.retry_limit || dt * 0.5 < ctrl.dt_min {
                        return Err(Error::StepFailure {
                            t: state.t,
                            dt,
                            index,
                        });
                    }
                    dt *= 0.5;
                    halvings += 1;
                }
                Err(other) => return Err(other),
            }
        }
    }

    /// Integrates from `start` to `horizon`, calling `observer` on `start`
    /// and at every multiple of the snapshot interval (and at `horizon`).
    pub fn run_from(
        &self,
        start: FlowState,
        horizon: f64,
        ctrl: &StepControl,
        observer: &mut dyn FnMut(&FlowState) -> Result<()>,
    ) -> Result<FlowState> {
        ctrl.validate()?;
        if !(horizon > start.t) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must exceed start time {}",
                start.t
            )));
        }
        let mut state = start;
        self.check_tail(&state)?;
        observer(&state)?;
        let interval = ctrl.snapshot_interval;
        let mut next_k = (state.t / interval + 1e-9).floor() as u64 + 1;
        loop {
            let target = (next_k as f64 * interval).min(horizon);
            while target - state.t > 1e-12 * target.max(1.0) {
                let cap = target - state.t;
                let mut next = self.step(&state, ctrl, cap)?;
                if (target - next.t).abs() <= 1e-12 * target.max(1.0) {
                    next.t = target;
                }
                state = next;
            }
            state.t = target;
            self.check_tail(&state)?;
            observer(&state)?;
            if target >= horizon {
                return Ok(state);
            }
            next_k += 1;
        }
    }

    pub fn run(
        &self,
        horizon: f64,
        ctrl: &StepControl,
        observer: &mut dyn FnMut(&FlowState) -> Result<()>,
    ) -> Result<FlowState> {
        self.run_from(self.initial_state()?, horizon, ctrl, observer)
    }

    /// Fails when `phi-tilde` carries energy in the outermost Fourier shells.
    /// Fields at round-off level relative to the metric scale are skipped.
    pub fn check_tail(&self, state: &FlowState) -> Result<()> {
        if state.phi_tilde.sup_abs() <= 1e-10 * self.metric.scale() {
            return Ok(());
        }
        let tail = self.ops.spectral_tail(&state.phi_tilde);
        if tail > TAIL_LIMIT {
            return Err(Error::TailAlarm { t: state.t, tail });
        }
        Ok(())
    }
}

fn argmin_rel(p: &FlowProblem, e: &RhsEval) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (i, gp) in e.gprime.samples.iter().enumerate() {
        let r = relative_min_eig(&p.g_inv[i], p.g_det[i], gp);
        if r < best.0 || !r.is_finite() {
            best = (r, i);
        }
    }
    best.1
}

/// `(log det(g + dd-bar phi)/det g - F, g + dd-bar phi)`.
pub fn flow_rhs(
    phi: &ScalarField,
    g: &MetricField,
    f: &ScalarField,
) -> Result<(ScalarField, MatrixField)> {
    let p = FlowProblem::new(g.clone(), f.clone())?;
    let e = p.eval(phi)?;
    Ok((e.rhs, e.gprime))
}

/// Runs from `phi = 0` and returns the final state together with every
/// emitted snapshot time.
pub fn run(
    g: &MetricField,
    f: &ScalarField,
    horizon: f64,
    ctrl: &StepControl,
    observer: &mut dyn FnMut(&FlowState) -> Result<()>,
) -> Result<FlowState> {
    FlowProblem::new(g.clone(), f.clone())?.run(horizon, ctrl, observer)
}
