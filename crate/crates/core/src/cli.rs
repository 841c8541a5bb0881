//! Command-line front end: `maflow <mode> --config <path> [--out <dir>] [--seed <u64>]`.
//!
//! Exit codes: 0 when every invoked check passes, 1 on a failed check, 2 on a
//! configuration or output-directory error, 3 on a solver or step failure.

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{Mode, RunConfig};
use crate::dump;
use crate::elliptic::solve_with;
use crate::error::{Error, Result};
use crate::frame::{basis_coefficients, frame_decompose, standard_frame};
use crate::herm::HermMat;
use crate::normal_frame::{normal_frame_at, off_diagonal, pull_back, LinearMetricJet};
use crate::run::{create_dir, execute_flow, write_artifacts, FlowOutcome};
use crate::verify::{random_spd, verify_all, CriterionResult};

pub const THREADS_VAR: &str = "MAFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "maflow",
    version,
    about = "Monge-Ampere flow simulator on Hermitian tori"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// One named check with its measured value.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: String,
}

impl Check {
    fn new(name: &str, passed: bool, measured: String) -> Self {
        Self {
            name: name.into(),
            passed,
            measured,
        }
    }

    fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured
        )
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

/// Parses `MAFLOW_THREADS`; `None` or `Some(0)` means automatic.
pub fn thread_count(var: Option<&str>) -> Result<usize> {
    match var {
        None => Ok(0),
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_VAR} must be a count, got {s:?}"))),
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(&cli.config)?;
    cfg.mode = cli.mode;
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

/// Runs one invocation. Progress goes to `out`, failures to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = load(cli).and_then(|cfg| match cfg.mode {
        Mode::Flow => flow_mode(&cfg, out),
        Mode::SolveElliptic => elliptic_mode(&cfg, out),
        Mode::Verify => verify_mode(&cfg, out),
        Mode::DecomposeDemo => decompose_demo(&cfg, out),
        Mode::NormalFrameDemo => normal_frame_demo(&cfg, out),
    });
    match result {
        Ok(checks) => {
            let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
            for c in &failed {
                let _ = writeln!(err, "check failed: {}: {}", c.name, c.measured);
            }
            i32::from(!failed.is_empty())
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn say(out: &mut dyn Write, line: String) {
    let _ = writeln!(out, "{line}");
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Invariants every flow run must satisfy regardless of the source.
pub fn flow_invariants(run: &FlowOutcome) -> Vec<Check> {
    let recs = &run.report.series.records;
    let n = run.problem.grid.complex_dim as f64;
    let sup_f = run.summary.sup_f;
    let fold = |f: &dyn Fn(&crate::monitors::MonitorRecord) -> f64| {
        recs.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    };
    let overshoot = fold(&|r| r.sup_dphidt - sup_f);
    let mean = fold(&|r| r.mean_phitilde.abs());
    let ident = fold(&|r| (r.trace_max - n - r.max_laplacian_phitilde).abs());
    let q_gap = fold(&|r| r.trace_max.ln() - r.q_max);
    let eig_min = recs.iter().map(|r| r.eig_min).fold(f64::INFINITY, f64::min);
    vec![
        Check::new(
            "maximum principle",
            overshoot <= 1e-8,
            format!("max(sup|dphi/dt| - sup|F|) = {overshoot:.3e} (<= 1e-8)"),
        ),
        Check::new(
            "zero mean",
            mean <= 1e-12,
            format!("max|mean phi~| = {mean:.3e} (<= 1e-12)"),
        ),
        Check::new(
            "trace identity",
            ident <= 1e-10,
            format!("max|trace_max - n - max lap phi~| = {ident:.3e} (<= 1e-10)"),
        ),
        Check::new(
            "Q dominates log trace",
            q_gap <= 1e-12,
            format!("max(log trace_max - Q_max) = {q_gap:.3e} (<= 1e-12)"),
        ),
        Check::new(
            "positivity",
            eig_min > 0.0,
            format!("min eig of g^-1 g' = {eig_min:.4} (> 0)"),
        ),
    ]
}

fn flow_mode(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Check>> {
    create_dir(&cfg.output.dir)?;
    let run = execute_flow(cfg)?;
    run.report.series.validate()?;
    write_artifacts(&run, &cfg.output.dir)?;
    let s = &run.summary;
    say(
        out,
        format!(
            "flow to t = {:.4} in {} steps ({} halvings), {:.2} s",
            s.final_t,
            s.steps,
            s.halvings,
            run.flow_time.as_secs_f64()
        ),
    );
    match (&s.decay_fit, &s.decay_error) {
        (Some(f), _) if f.degenerate => {
            say(out, "decay fit: degenerate (stationary series)".into())
        }
        (Some(f), _) => say(
            out,
            format!(
                "decay fit: eta = {:.6}, C = {:.4e}, r^2 = {:.6}, delta = {:.4e}",
                f.eta,
                f.c,
                f.r_squared,
                s.delta.unwrap_or(f64::NAN)
            ),
        ),
        (None, Some(e)) => say(out, format!("decay fit: {e}")),
        (None, None) => {}
    }
    say(
        out,
        format!("b_flow = {:.15}, C* = {:.6}", s.b_flow, s.c_star),
    );
    if let Some(b) = s.b {
        say(
            out,
            format!(
                "elliptic oracle: b = {b:.15}, |phi~_flow - phi~_newton| = {:.3e}",
                s.phi_tilde_gap_newton.unwrap_or(f64::NAN)
            ),
        );
    }
    if let (Some(b), Some(e)) = (s.b_exact, s.phi_tilde_error_exact) {
        say(
            out,
            format!("manufactured: b = {b}, |phi~ - psi~| = {e:.3e}"),
        );
    }
    let checks = flow_invariants(&run);
    for c in &checks {
        say(out, c.line());
    }
    say(out, format!("artifacts in {}", cfg.output.dir.display()));
    Ok(checks)
}

#[derive(Serialize)]
struct EllipticReport<'a> {
    b: f64,
    residual_sup: f64,
    newton_iters: usize,
    b_exact: Option<f64>,
    phi_tilde_error_exact: Option<f64>,
    config: &'a RunConfig,
}

fn elliptic_mode(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Check>> {
    create_dir(&cfg.output.dir)?;
    let metric = cfg.build_metric()?;
    let source = cfg.build_source(&metric)?;
    let opts = cfg.elliptic.options();
    let sol = solve_with(&metric, &source.f, None, &opts)?;
    let report = EllipticReport {
        b: sol.b,
        residual_sup: sol.residual_sup,
        newton_iters: sol.newton_iters,
        b_exact: source.exact.as_ref().map(|e| e.b),
        phi_tilde_error_exact: source
            .exact
            .as_ref()
            .map(|e| sol.phi_tilde_inf.dist_sup(&e.psi_tilde)),
        config: cfg,
    };
    dump::write_scalar(&cfg.output.dir.join("phi_tilde.bin"), &sol.phi_tilde_inf)?;
    write_json(&cfg.output.dir.join("elliptic.json"), &report)?;
    say(
        out,
        format!(
            "Newton: b = {:.15} after {} iterations, residual {:.3e}",
            sol.b, sol.newton_iters, sol.residual_sup
        ),
    );
    if let (Some(b), Some(e)) = (report.b_exact, report.phi_tilde_error_exact) {
        say(
            out,
            format!("manufactured: b = {b}, |phi~ - psi~| = {e:.3e}"),
        );
    }
    say(out, format!("artifacts in {}", cfg.output.dir.display()));
    let check = Check::new(
        "residual",
        sol.residual_sup <= opts.tol,
        format!("{:.3e} (<= {:e})", sol.residual_sup, opts.tol),
    );
    Ok(vec![check])
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    seed: u64,
    passed: usize,
    failed: usize,
    criteria: &'a [CriterionResult],
}

fn verify_mode(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Check>> {
    create_dir(&cfg.output.dir)?;
    let results = verify_all(cfg.rng_seed, &mut |r| say(out, r.line()));
    let failed = results.iter().filter(|r| !r.passed).count();
    let report = VerifyReport {
        seed: cfg.rng_seed,
        passed: results.len() - failed,
        failed,
        criteria: &results,
    };
    write_json(&cfg.output.dir.join("verify.json"), &report)?;
    let text: String = results.iter().map(|r| r.line() + "\n").collect();
    std::fs::write(cfg.output.dir.join("verify.txt"), text)
        .map_err(|e| Error::Io(e.to_string()))?;
    say(
        out,
        format!("{} passed, {} failed", report.passed, report.failed),
    );
    Ok(results
        .iter()
        .map(|r| Check::new(&format!("criterion {}", r.id), r.passed, r.measured.clone()))
        .collect())
}

pub const DEMO_SAMPLES: usize = 5;
pub const DEMO_EIG_RANGE: (f64, f64) = (0.2, 5.0);

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn decompose_demo(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Check>> {
    let n = cfg.grid.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let frame = standard_frame(n);
    say(
        out,
        format!(
            "standard frame for n = {n}: {} vectors, eigenvalues drawn from [{}, {}]",
            frame.len(),
            DEMO_EIG_RANGE.0,
            DEMO_EIG_RANGE.1
        ),
    );
    let mut checks = Vec::new();
    for s in 0..DEMO_SAMPLES {
        let a = random_spd(n, &mut rng, DEMO_EIG_RANGE);
        say(
            out,
            format!("sample {s}: eigenvalues {}", fmt_vec(&a.eigvals_desc())),
        );
        match frame_decompose(&a, DEMO_EIG_RANGE) {
            Ok(d) => {
                let rec = d.reconstruct().sub(&a).norm_max();
                say(
                    out,
                    format!(
                        "  betas {} with shift {:.4e}, bounds [{:.4e}, {:.4}], reconstruction error {rec:.3e}",
                        fmt_vec(&d.betas),
                        d.shift,
                        d.bounds.0,
                        d.bounds.1
                    ),
                );
                checks.push(Check::new(
                    &format!("sample {s} reconstruction"),
                    rec <= 1e-12,
                    format!("{rec:.3e} (<= 1e-12)"),
                ));
            }
            Err(e @ Error::ShiftFailure { .. }) => {
                let coef = basis_coefficients(&a, &frame)?;
                say(
                    out,
                    format!("  {e}; unshifted coefficients {}", fmt_vec(&coef)),
                );
                checks.push(Check::new(
                    &format!("sample {s} positivity"),
                    false,
                    e.to_string(),
                ));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(checks)
}

fn normal_frame_demo(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Check>> {
    let metric = cfg.build_metric()?;
    let grid = metric.grid;
    let n = grid.complex_dim;
    let scale = metric.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    // the potential is a seeded random trig polynomial at the metric's scale
    let potential = crate::config::random_source(&grid, 0.2 * scale, 2, rng.gen()).sample(&grid);
    let ops = crate::spectral::SpectralOps::new(grid);
    let hess = ops.complex_hessian(&potential);
    say(
        out,
        format!(
            "metric preset {} on n = {n}, N = {}",
            metric.preset.name(),
            grid.points_per_axis
        ),
    );
    let mut checks = Vec::new();
    for _ in 0..DEMO_SAMPLES {
        let p = rng.gen_range(0..grid.len());
        let x = grid.coords(p);
        let g0 = metric.samples.samples[p];
        let dg: Vec<_> = (0..n).map(|k| metric.definition.d_holo(k, &x)).collect();
        let h0: HermMat = hess.samples[p];
        let f = normal_frame_at(p, &g0, &dg, &h0)?;
        let a = &f.linear_map;
        let metric_err = pull_back(&g0, a).sub(&HermMat::identity(n)).norm_max();
        let offdiag = off_diagonal(&pull_back(&h0, a));
        let deriv = LinearMetricJet { g0, dg }.fd_diagonal_derivative(&f, 1e-3);
        let b_max = (0..n)
            .flat_map(|i| (0..n).flat_map(move |j| (0..n).map(move |k| (i, j, k))))
            .map(|(i, j, k)| f.quadratic_coeffs[i][j][k].norm())
            .fold(0.0, f64::max);
        say(
            out,
            format!(
                "point {p} at {:?}: Hessian diagonal {}, max |b| = {b_max:.4e}",
                &x[..2 * n],
                fmt_vec(&f.hessian_diag)
            ),
        );
        say(
            out,
            format!(
                "  |g - I| = {metric_err:.3e}, Hessian off-diagonal {offdiag:.3e}, FD |d g_ii| = {deriv:.3e}"
            ),
        );
        checks.push(Check::new(
            &format!("point {p} frame"),
            metric_err <= 1e-10 && offdiag <= 1e-10 && deriv <= 1e-6,
            format!("{metric_err:.3e}, {offdiag:.3e} (<= 1e-10); {deriv:.3e} (<= 1e-6)"),
        ));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> (i32, String, String) {
        let cli =
            Cli::try_parse_from(std::iter::once("maflow").chain(args.iter().copied())).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&cli, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    fn config(dir: &Path, body: &str) -> String {
        let p = dir.join("c.toml");
        std::fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_owned()
    }

    #[test]
    fn zero_flow_passes_and_embeds_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            dir.path(),
            "grid.points = 16\nhorizon = 3.0\nmonitors.holder.sample_pairs = 200\n",
        );
        let out = dir.path().join("o");
        let (code, stdout, _) = invoke(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert!(stdout.contains("degenerate"));
        let json = std::fs::read_to_string(out.join("summary.json")).unwrap();
        assert!(json.contains("\"mode\": \"flow\""));
        assert!(out.join("monitors.csv").exists());
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), "metric.preset = \"klein_bottle\"\n");
        let (code, _, err) = invoke(&["flow", "--config", &cfg]);
        assert_eq!(code, 2);
        assert!(err.contains("klein_bottle"));
    }

    #[test]
    fn solver_failure_is_exit_3() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            dir.path(),
            "grid.points = 8\nsource.kind = \"trig\"\nsource.modes = \"cos:1,0:40\"\n",
        );
        let (code, _, err) = invoke(&[
            "flow",
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 3);
        assert!(err.contains("step failed"));
    }

    #[test]
    fn seed_flag_overrides_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), "rng_seed = 3\n");
        let cli =
            Cli::try_parse_from(["maflow", "flow", "--config", &cfg, "--seed", "17"]).unwrap();
        let loaded = load(&cli).unwrap();
        assert_eq!(loaded.rng_seed, 17);
        assert_eq!(loaded.monitors.holder.rng_seed, 17);
        assert!(Cli::try_parse_from(["maflow", "sideways", "--config", &cfg]).is_err());
    }

    #[test]
    fn demos_report_their_checks() {
        let dir = tempfile::tempdir().unwrap();
        let one = config(dir.path(), "grid.n = 1\n");
        let (code, stdout, _) = invoke(&["decompose-demo", "--config", &one]);
        assert_eq!(code, 0);
        assert_eq!(stdout.matches("reconstruction error").count(), DEMO_SAMPLES);
        let two = config(
            dir.path(),
            "grid.n = 2\ngrid.points = 8\nmetric.preset = \"hermitian_nonkahler\"\nmetric.param = 0.3\n",
        );
        let (code, stdout, _) = invoke(&["normal-frame-demo", "--config", &two]);
        assert_eq!(code, 0);
        assert_eq!(stdout.matches("|g - I|").count(), DEMO_SAMPLES);
    }

    #[test]
    fn thread_variable() {
        assert_eq!(thread_count(None).unwrap(), 0);
        assert_eq!(thread_count(Some("3")).unwrap(), 3);
        assert!(matches!(thread_count(Some("lots")), Err(Error::Config(_))));
    }
}
