//! Measurable diagnostics evaluated on flow snapshots: bounds on the time
//! derivative, metric equivalence, the `Q` quantity, a sampled Hölder
//! seminorm of `g'`, Li–Yau and Harnack checks and exponential decay.

pub mod decay;
pub mod holder;
pub mod liyau;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub use decay::{contraction_and_decay, theta_at_integers, theta_floor, DecayFit};
pub use holder::{holder_seminorm, HolderConfig, HolderTracker, PackedSnapshot};
pub use liyau::{
    fit_envelope, harnack_check, liyau_quantity, xi_surrogate, EnvelopeFit, HarnackConstants,
    HarnackReport, LiYauSample, Surrogate,
};

use crate::error::{Error, Result};
use crate::flow::{FlowProblem, FlowState};
use crate::grid::{ScalarField, TorusGrid};
use crate::herm::{relative_eigs, trace_pair};
use crate::metric::integrate;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub sup_dphidt: f64,
    pub sup_dphitilde_dt: f64,
    /// `theta(t) = sup u - inf u` for `u = dphi/dt`.
    pub osc_u: f64,
    pub trace_max: f64,
    /// `max_x g^{i j-bar} d_i d_{j-bar} phi-tilde`.
    pub max_laplacian_phitilde: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub q_max: f64,
    pub holder_seminorm: f64,
    /// Li–Yau quantity of the surrogate window containing `t`; 0 when the
    /// window is unresolved or `t` has no neighbour on both sides.
    pub liyau_max: f64,
    /// `sup u(t1) / inf u(t2)` of the window ending at `t`, else 0.
    pub harnack_ratio: f64,
    pub mean_phitilde: f64,
}

impl MonitorRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.sup_dphidt,
            self.sup_dphitilde_dt,
            self.osc_u,
            self.trace_max,
            self.max_laplacian_phitilde,
            self.eig_min,
            self.eig_max,
            self.q_max,
            self.holder_seminorm,
            self.liyau_max,
            self.harnack_ratio,
            self.mean_phitilde,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub const CSV_HEADER: &str =
    "t,sup_dphidt,osc_u,trace_max,eig_min,eig_max,Q_max,holder_seminorm,liyau_max,mean_phitilde";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub records: Vec<MonitorRecord>,
}

impl MonitorSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            // Display for f64 is the shortest exact round trip
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.sup_dphidt,
                r.osc_u,
                r.trace_max,
                r.eig_min,
                r.eig_max,
                r.q_max,
                r.holder_seminorm,
                r.liyau_max,
                r.mean_phitilde
            );
        }
        s
    }

    /// Time at which `key` first reaches its maximum over the series.
    /// First time the running max of `key` comes within `tol` of its final
    /// value. Plateaus that only wobble at roundoff do not move it.
    pub fn running_max_attained(
        &self,
        key: impl Fn(&MonitorRecord) -> f64,
        tol: f64,
    ) -> Option<f64> {
        let top = self
            .records
            .iter()
            .map(&key)
            .fold(f64::NEG_INFINITY, f64::max);
        self.records
            .iter()
            .find(|r| key(r) >= top - tol)
            .map(|r| r.t)
    }

    /// Latest record with `t <= at`.
    pub fn at_or_before(&self, at: f64) -> Option<&MonitorRecord> {
        self.records.iter().rev().find(|r| r.t <= at + 1e-9)
    }

    /// Witness `C*` with `1/C* <= eig_min` and `eig_max <= C*` throughout.
    pub fn c_star(&self) -> f64 {
        self.records
            .iter()
            .map(|r| (1.0 / r.eig_min).max(r.eig_max))
            .fold(1.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite record at t = {}",
                    r.t
                )));
            }
            if i > 0 && r.t < self.records[i - 1].t {
                return Err(Error::InvalidArgument(format!(
                    "time decreases at t = {}",
                    r.t
                )));
            }
        }
        Ok(())
    }
}

/// Pointwise bounds of one snapshot. `q_max`, `holder_seminorm`,
/// `liyau_max` and `harnack_ratio` are left at zero.
pub fn monitor_basic(state: &FlowState, problem: &FlowProblem) -> Result<MonitorRecord> {
    let u = &state.dphi_dt;
    let mean_u = integrate(u, &problem.weights)?;
    let hess = problem.ops.complex_hessian(&state.phi_tilde);
    let g = &problem.metric.samples.samples;
    let g_inv = problem.g_inv();
    let per_point: Vec<Result<(f64, f64, f64, f64)>> = (0..problem.grid.len())
        .into_par_iter()
        .map(|p| {
            let gp = &state.gprime.samples[p];
            let tr = trace_pair(&g_inv[p], gp);
            let lap = trace_pair(&g_inv[p], &hess.samples[p]);
            let ev = relative_eigs(&g[p], gp).ok_or(Error::PositivityViolation {
                index: p,
                min_eig: g[p].min_eig(),
            })?;
            Ok((tr, lap, ev[ev.len() - 1], ev[0]))
        })
        .collect();
    let mut rec = MonitorRecord {
        t: state.t,
        sup_dphidt: u.sup_abs(),
        sup_dphitilde_dt: u
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max((v - mean_u).abs())),
        osc_u: u.oscillation(),
        trace_max: f64::NEG_INFINITY,
        max_laplacian_phitilde: f64::NEG_INFINITY,
        eig_min: f64::INFINITY,
        eig_max: f64::NEG_INFINITY,
        mean_phitilde: integrate(&state.phi_tilde, &problem.weights)?,
        ..MonitorRecord::default()
    };
    for r in per_point {
        let (tr, lap, lo, hi) = r?;
        rec.trace_max = rec.trace_max.max(tr);
        rec.max_laplacian_phitilde = rec.max_laplacian_phitilde.max(lap);
        rec.eig_min = rec.eig_min.min(lo);
        rec.eig_max = rec.eig_max.max(hi);
    }
    Ok(rec)
}

/// `max_x log tr_g g' + exp(A (sup_phi - phi-tilde))`. `sup_phi` is the
/// supremum of `phi-tilde` over the space-time region seen so far; `None`
/// uses the current snapshot alone.
pub fn monitor_q(state: &FlowState, problem: &FlowProblem, a: f64, sup_phi: Option<f64>) -> f64 {
    let sup = sup_phi.unwrap_or_else(|| state.phi_tilde.max());
    let g_inv = problem.g_inv();
    state
        .gprime
        .samples
        .iter()
        .zip(&state.phi_tilde.values)
        .enumerate()
        .map(|(p, (gp, phi))| trace_pair(&g_inv[p], gp).ln() + (a * (sup - phi)).exp())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Weight `A` in `Q`.
    pub q_a: f64,
    pub holder: HolderConfig,
    pub liyau_alpha: f64,
    pub harnack_t1: f64,
    pub harnack_t2: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            q_a: 1.0,
            holder: HolderConfig::default(),
            liyau_alpha: liyau::DEFAULT_ALPHA,
            harnack_t1: 0.5,
            harnack_t2: 1.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        self.holder.validate()?;
        let ok = self.q_a > 0.0
            && self.liyau_alpha > 1.0
            && self.liyau_alpha < 2.0
            && self.harnack_t1 > 0.0
            && self.harnack_t1 < self.harnack_t2
            && self.harnack_t2 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid monitor config {self:?}"
            )))
        }
    }
}

/// Li–Yau and Harnack results of one unit window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostics {
    pub window: usize,
    pub shifted: bool,
    pub liyau: Vec<LiYauSample>,
    pub envelope: EnvelopeFit,
    pub envelope_certified: bool,
    pub harnack: HarnackReport,
}

#[derive(Clone, Debug)]
pub struct MonitorReport {
    pub series: MonitorSeries,
    pub windows: Vec<WindowDiagnostics>,
    /// Windows skipped because `theta(m-1)` is below resolution.
    pub unresolved_windows: Vec<usize>,
}

/// Collects records along a run and keeps what the post-run diagnostics need.
#[derive(Debug)]
pub struct MonitorSuite {
    cfg: MonitorConfig,
    grid: TorusGrid,
    holder: HolderTracker,
    records: Vec<MonitorRecord>,
    times: Vec<f64>,
    u: Vec<ScalarField>,
    gprime: Vec<PackedSnapshot>,
    sup_phi: f64,
}

impl MonitorSuite {
    pub fn new(grid: TorusGrid, cfg: MonitorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            grid,
            holder: HolderTracker::new(grid, cfg.holder)?,
            records: Vec::new(),
            times: Vec::new(),
            u: Vec::new(),
            gprime: Vec::new(),
            sup_phi: f64::NEG_INFINITY,
        })
    }

    pub fn records(&self) -> &[MonitorRecord] {
        &self.records
    }

    pub fn observe(&mut self, problem: &FlowProblem, state: &FlowState) -> Result<()> {
        let mut rec = monitor_basic(state, problem)?;
        self.sup_phi = self.sup_phi.max(state.phi_tilde.max());
        rec.q_max = monitor_q(state, problem, self.cfg.q_a, Some(self.sup_phi));
        self.times.push(state.t);
        self.u.push(state.dphi_dt.clone());
        self.gprime
            .push(PackedSnapshot::from_field(state.t, &state.gprime));
        let history: Vec<&PackedSnapshot> = self.gprime.iter().collect();
        rec.holder_seminorm = self.holder.update(&history);
        self.records.push(rec);
        Ok(())
    }

    /// Runs the windowed Li–Yau and Harnack diagnostics and assembles the series.
    pub fn finish(mut self, problem: &FlowProblem) -> Result<MonitorReport> {
        let mut windows = Vec::new();
        let mut unresolved = Vec::new();
        let series = MonitorSeries {
            records: self.records.clone(),
        };
        let theta = theta_at_integers(&series);
        if let Some(&(_, theta0)) = theta.first() {
            let floor = theta_floor(theta0);
            for m in 1..theta.len() {
                if theta[m - 1].1 < floor {
                    unresolved.push(m);
                    continue;
                }
                // too few snapshots inside the window to difference in time
                let w = match self.window(problem, m) {
                    Err(Error::SeriesTooShort { .. }) => {
                        unresolved.push(m);
                        continue;
                    }
                    other => other?,
                };
                let t0 = (m - 1) as f64;
                for sample in &w.liyau {
                    if let Some(r) = self
                        .records
                        .iter_mut()
                        .find(|r| (r.t - t0 - sample.t).abs() <= 1e-9)
                    {
                        r.liyau_max = sample.quantity;
                    }
                }
                let t2 = t0 + self.cfg.harnack_t2;
                if let Some(r) = self.records.iter_mut().find(|r| (r.t - t2).abs() <= 1e-9) {
                    r.harnack_ratio = w.harnack.ratio();
                }
                windows.push(w);
            }
        }
        let series = MonitorSeries {
            records: self.records,
        };
        series.validate()?;
        Ok(MonitorReport {
            series,
            windows,
            unresolved_windows: unresolved,
        })
    }

    fn window(&self, problem: &FlowProblem, m: usize) -> Result<WindowDiagnostics> {
        let sur = xi_surrogate(&self.times, &self.u, m)?;
        let inv = sur
            .indices
            .iter()
            .map(|&s| liyau::inverse_field(self.grid, &self.gprime[s]))
            .collect::<Result<Vec<_>>>()?;
        let samples = liyau_quantity(
            &problem.ops,
            &sur.times,
            &sur.values,
            &inv,
            self.cfg.liyau_alpha,
        )?;
        let envelope = fit_envelope(&samples)?;
        let harnack = harnack_check(
            &sur.times,
            &sur.values,
            self.cfg.harnack_t1,
            self.cfg.harnack_t2,
        )?;
        Ok(WindowDiagnostics {
            window: m,
            shifted: sur.shifted,
            envelope_certified: envelope.certifies(&samples),
            liyau: samples,
            envelope,
            harnack,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowProblem, StepControl};
    use crate::grid::ScalarField;
    use crate::metric::{normalized_metric, MetricPreset};

    fn problem(f: impl Fn(&[f64; 4]) -> f64) -> FlowProblem {
        let grid = TorusGrid::standard(1, 16).unwrap();
        let g =
            normalized_metric(&grid, MetricPreset::HermitianNonkahler { epsilon: 0.3 }).unwrap();
        let f = ScalarField::from_fn(grid, |x| g.scale() * f(x));
        FlowProblem::new(g, f).unwrap()
    }

    #[test]
    fn stationary_snapshot() {
        let p = problem(|_| 0.0);
        let s = p.initial_state().unwrap();
        let r = monitor_basic(&s, &p).unwrap();
        assert_eq!(r.sup_dphidt, 0.0);
        assert!((r.trace_max - 1.0).abs() < 1e-14);
        assert!((r.eig_min - 1.0).abs() < 1e-14 && (r.eig_max - 1.0).abs() < 1e-14);
        let q = monitor_q(&s, &p, 1.0, None);
        assert!((q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn initial_time_derivative_is_source() {
        let p = problem(|x| x[0].cos() + 0.3);
        let s = p.initial_state().unwrap();
        let r = monitor_basic(&s, &p).unwrap();
        assert_eq!(r.sup_dphidt, p.f.sup_abs());
    }

    #[test]
    fn q_dominates_log_trace_and_trace_identity() {
        let p = problem(|x| 0.5 * x[0].cos() - 0.2 * x[1].sin());
        let mut suite = MonitorSuite::new(p.grid, MonitorConfig::default()).unwrap();
        let ctrl = StepControl::default();
        p.run(1.0, &ctrl, &mut |s| suite.observe(&p, s)).unwrap();
        for r in suite.records() {
            assert!(r.q_max >= r.trace_max.ln());
            assert!((r.trace_max - 1.0 - r.max_laplacian_phitilde).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_layout() {
        let s = MonitorSeries {
            records: vec![MonitorRecord {
                t: 0.5,
                ..MonitorRecord::default()
            }],
        };
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 10);
    }

    #[test]
    fn running_max_ignores_roundoff_wobble() {
        let rec = |t, v| MonitorRecord {
            t,
            trace_max: v,
            ..MonitorRecord::default()
        };
        let plateau = MonitorSeries {
            records: vec![
                rec(0.0, 1.0),
                rec(1.0, 2.0),
                rec(2.0, 2.0 + 4e-16),
                rec(3.0, 2.0),
            ],
        };
        assert_eq!(
            plateau.running_max_attained(|r| r.trace_max, 1e-10),
            Some(1.0)
        );
        assert_eq!(
            plateau.running_max_attained(|r| r.trace_max, 0.0),
            Some(2.0)
        );
        let late = MonitorSeries {
            records: vec![rec(0.0, 1.0), rec(1.0, 2.0), rec(3.0, 2.0 + 1e-8)],
        };
        assert_eq!(late.running_max_attained(|r| r.trace_max, 1e-10), Some(3.0));
    }
}
