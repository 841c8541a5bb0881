//! One configured flow run: integrate with monitors attached, optionally
//! solve the elliptic problem for comparison, and write artifacts.

use serde::Serialize;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::config::{RunConfig, Source};
use crate::dump;
use crate::elliptic::{solve_with, EllipticSolution};
use crate::error::{Error, Result};
use crate::flow::{FlowProblem, FlowState};
use crate::metric::integrate;
use crate::monitors::{
    contraction_and_decay, DecayFit, MonitorReport, MonitorSuite, WindowDiagnostics,
};

pub const CSV_NAME: &str = "monitors.csv";
pub const SUMMARY_NAME: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowSummary {
    pub window: usize,
    pub shifted: bool,
    pub liyau_c1: f64,
    pub liyau_c2: f64,
    pub liyau_certified: bool,
    pub harnack_ratio: f64,
    pub harnack_c1: Option<f64>,
    pub harnack_c2: Option<f64>,
    pub harnack_c3: Option<f64>,
    pub harnack_holds: bool,
}

impl From<&WindowDiagnostics> for WindowSummary {
    fn from(w: &WindowDiagnostics) -> Self {
        let c = w.harnack.constants;
        Self {
            window: w.window,
            shifted: w.shifted,
            liyau_c1: w.envelope.c1,
            liyau_c2: w.envelope.c2,
            liyau_certified: w.envelope_certified,
            harnack_ratio: w.harnack.ratio(),
            harnack_c1: c.map(|c| c.c1),
            harnack_c2: c.map(|c| c.c2),
            harnack_c3: c.map(|c| c.c3),
            harnack_holds: w.harnack.holds(),
        }
    }
}

/// JSON summary of a run. Holds no timings so that reruns compare byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub r_squared: Option<f64>,
    pub decay_fit: Option<DecayFit>,
    pub decay_error: Option<String>,
    #[serde(rename = "C_star")]
    pub c_star: f64,
    /// From the elliptic oracle when it ran.
    pub b: Option<f64>,
    /// `integrate(dphi/dt)` at the horizon.
    pub b_flow: f64,
    pub b_exact: Option<f64>,
    pub phi_tilde_error_exact: Option<f64>,
    pub phi_tilde_gap_newton: Option<f64>,
    pub newton_iters: Option<usize>,
    pub newton_residual: Option<f64>,
    pub sup_f: f64,
    pub final_t: f64,
    pub steps: u64,
    pub halvings: u64,
    pub windows: Vec<WindowSummary>,
    pub unresolved_windows: Vec<usize>,
    pub config: RunConfig,
}

pub struct FlowOutcome {
    pub config: RunConfig,
    pub problem: FlowProblem,
    pub source: Source,
    pub final_state: FlowState,
    pub report: MonitorReport,
    pub newton: Option<EllipticSolution>,
    pub summary: RunSummary,
    pub flow_time: Duration,
    pub newton_time: Duration,
}

impl FlowOutcome {
    pub fn csv(&self) -> String {
        self.report.series.to_csv()
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }
}

pub fn execute_flow(cfg: &RunConfig) -> Result<FlowOutcome> {
    let metric = cfg.build_metric()?;
    let source = cfg.build_source(&metric)?;
    let problem = FlowProblem::new(metric, source.f.clone())?;
    let started = Instant::now();
    let mut suite = MonitorSuite::new(problem.grid, cfg.monitors)?;
    let final_state = problem.run(cfg.horizon, &cfg.flow, &mut |s| suite.observe(&problem, s))?;
    let report = suite.finish(&problem)?;
    let flow_time = started.elapsed();

    let started = Instant::now();
    let newton = if cfg.elliptic.oracle {
        Some(solve_with(
            &problem.metric,
            &problem.f,
            Some(&final_state.phi_tilde),
            &cfg.elliptic.options(),
        )?)
    } else {
        None
    };
    let newton_time = started.elapsed();

    let (delta, fit, decay_error) = match contraction_and_decay(&report.series) {
        Ok((d, f)) => (Some(d), Some(f), None),
        Err(e @ Error::SeriesTooShort { .. }) => (None, None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let live = fit.filter(|f| !f.degenerate);
    let summary = RunSummary {
        delta,
        eta: live.map(|f| f.eta),
        c: live.map(|f| f.c),
        r_squared: live.map(|f| f.r_squared),
        decay_fit: fit,
        decay_error,
        c_star: report.series.c_star(),
        b: newton.as_ref().map(|s| s.b),
        b_flow: integrate(&final_state.dphi_dt, &problem.weights)?,
        b_exact: source.exact.as_ref().map(|e| e.b),
        phi_tilde_error_exact: source
            .exact
            .as_ref()
            .map(|e| final_state.phi_tilde.dist_sup(&e.psi_tilde)),
        phi_tilde_gap_newton: newton
            .as_ref()
            .map(|s| final_state.phi_tilde.dist_sup(&s.phi_tilde_inf)),
        newton_iters: newton.as_ref().map(|s| s.newton_iters),
        newton_residual: newton.as_ref().map(|s| s.residual_sup),
        sup_f: problem.f.sup_abs(),
        final_t: final_state.t,
        steps: final_state.step_count,
        halvings: final_state.halvings,
        windows: report.windows.iter().map(WindowSummary::from).collect(),
        unresolved_windows: report.unresolved_windows.clone(),
        config: cfg.clone(),
    };
    Ok(FlowOutcome {
        config: cfg.clone(),
        problem,
        source,
        final_state,
        report,
        newton,
        summary,
        flow_time,
        newton_time,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Writes the CSV, the JSON summary and, if configured, field dumps.
pub fn write_artifacts(out: &FlowOutcome, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join(CSV_NAME), &out.csv())?;
    write_text(&dir.join(SUMMARY_NAME), &out.json())?;
    if out.config.output.dump {
        dump::write_scalar(&dir.join("phi_tilde.bin"), &out.final_state.phi_tilde)?;
        dump::write_scalar(&dir.join("dphi_dt.bin"), &out.final_state.dphi_dt)?;
        dump::write_matrix(&dir.join("gprime.bin"), &out.final_state.gprime)?;
        if let Some(s) = &out.newton {
            dump::write_scalar(&dir.join("phi_tilde_newton.bin"), &s.phi_tilde_inf)?;
        }
    }
    Ok(())
}
