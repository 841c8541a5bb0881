//! Run configuration. The file is flat `key = value` text with dotted
//! sections (`grid.n = 2`, `flow.dt_max = 1e-3`), read as TOML.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::elliptic::NewtonOptions;
use crate::error::{Error, Result};
use crate::flow::{flow_rhs, StepControl};
use crate::grid::{ScalarField, TorusGrid};
use crate::metric::{
    build_metric_with_floor, integrate, volume_normalize, MetricField, MetricPreset,
};
use crate::monitors::MonitorConfig;
use crate::trig::{TrigMode, TrigPoly};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Flow,
    SolveElliptic,
    Verify,
    DecomposeDemo,
    NormalFrameDemo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub points: usize,
    pub period: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 1,
            points: 32,
            period: 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub preset: String,
    pub param: Option<f64>,
    pub lambda_floor: f64,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            preset: "flat".into(),
            param: None,
            lambda_floor: crate::metric::DEFAULT_LAMBDA_FLOOR,
        }
    }
}

/// Source term `F`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// Trig modes, e.g. `"cos:1,0:0.01; sin:0,1:0.02"`.
    Trig {
        modes: String,
    },
    /// `F = log(det(g + dd-bar psi)/det g) - offset`, so the flow tends to
    /// `psi-tilde` with `dphi/dt -> offset`. The amplitudes of `psi` are in
    /// units of the metric scale.
    Manufactured {
        psi: String,
        offset: f64,
    },
    /// Seeded random modes with `0 < |k|^2 <= max_k2`, coefficients uniform
    /// in `[-amplitude, amplitude]`.
    Random {
        amplitude: f64,
        max_k2: i32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipticSection {
    /// Also solve the elliptic problem after a flow run and compare.
    pub oracle: bool,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EllipticSection {
    fn default() -> Self {
        let o = NewtonOptions::default();
        Self {
            oracle: false,
            tol: o.tol,
            max_iters: o.max_iters,
        }
    }
}

impl EllipticSection {
    pub fn options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write binary dumps of the final fields.
    pub dump: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: GridSection,
    pub metric: MetricSection,
    pub source: SourceSpec,
    pub horizon: f64,
    pub flow: StepControl,
    pub monitors: MonitorConfig,
    pub elliptic: EllipticSection,
    pub output: OutputSection,
    /// Seeds the random source and the Hölder sampler.
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Flow,
            grid: GridSection::default(),
            metric: MetricSection::default(),
            source: SourceSpec::Zero,
            horizon: 1.0,
            flow: StepControl::default(),
            monitors: MonitorConfig::default(),
            elliptic: EllipticSection::default(),
            output: OutputSection::default(),
            rng_seed: 0,
        }
    }
}

/// Source together with the exact limit when it is known.
#[derive(Clone, Debug)]
pub struct Source {
    pub f: ScalarField,
    pub exact: Option<ManufacturedTruth>,
}

#[derive(Clone, Debug)]
pub struct ManufacturedTruth {
    pub psi_tilde: ScalarField,
    pub b: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.monitors.holder.rng_seed = cfg.rng_seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Same config with a new seed for every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self.monitors.holder.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.grid().map_err(cfg_err)?;
        self.metric_preset()?;
        self.flow.validate().map_err(cfg_err)?;
        self.monitors.validate().map_err(cfg_err)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.metric.lambda_floor > 0.0) {
            return Err(Error::Config("metric.lambda_floor must be positive".into()));
        }
        if !(self.elliptic.tol >= 1e-12) {
            return Err(Error::Config(format!(
                "elliptic.tol {} is below 1e-12",
                self.elliptic.tol
            )));
        }
        match &self.source {
            SourceSpec::Random { amplitude, max_k2 } if !(*amplitude >= 0.0 && *max_k2 >= 1) => {
                Err(Error::Config(
                    "random source needs amplitude >= 0 and max_k2 >= 1".into(),
                ))
            }
            SourceSpec::Trig { modes } => {
                TrigPoly::parse(modes, &self.grid()?)?;
                Ok(())
            }
            SourceSpec::Manufactured { psi, .. } => {
                TrigPoly::parse(psi, &self.grid()?)?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n, self.grid.points, self.grid.period)
    }

    pub fn metric_preset(&self) -> Result<MetricPreset> {
        MetricPreset::parse(&self.metric.preset, self.metric.param)
    }

    /// Samples the preset at unit scale, checks the floor, then normalizes the volume.
    pub fn build_metric(&self) -> Result<MetricField> {
        let grid = self.grid()?;
        let raw = build_metric_with_floor(&grid, self.metric_preset()?, self.metric.lambda_floor)?;
        Ok(volume_normalize(&raw).0)
    }

    pub fn build_source(&self, metric: &MetricField) -> Result<Source> {
        let grid = metric.grid;
        let plain = |f| Source { f, exact: None };
        Ok(match &self.source {
            SourceSpec::Zero => plain(ScalarField::zeros(grid)),
            SourceSpec::Constant { value } => plain(ScalarField::constant(grid, *value)),
            SourceSpec::Trig { modes } => plain(TrigPoly::parse(modes, &grid)?.sample(&grid)),
            SourceSpec::Random { amplitude, max_k2 } => {
                plain(random_source(&grid, *amplitude, *max_k2, self.rng_seed).sample(&grid))
            }
            SourceSpec::Manufactured { psi, offset } => {
                let psi = TrigPoly::parse(psi, &grid)?
                    .scaled(metric.scale())
                    .sample(&grid);
                let (l, _) = flow_rhs(&psi, metric, &ScalarField::zeros(grid))?;
                let mean = integrate(&psi, &metric.weights())?;
                Source {
                    f: l.shift(-offset),
                    exact: Some(ManufacturedTruth {
                        psi_tilde: psi.shift(-mean),
                        b: *offset,
                    }),
                }
            }
        })
    }
}

/// One mode per `+-k` pair with `0 < |k|^2 <= max_k2`, in lexicographic
/// order of `k`; cosine then sine coefficient drawn per mode.
pub fn random_source(grid: &TorusGrid, amplitude: f64, max_k2: i32, seed: u64) -> TrigPoly {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = grid.real_dim();
    let r = (max_k2 as f64).sqrt().floor() as i32;
    let side = (2 * r + 1) as usize;
    let mut modes = Vec::new();
    for code in 0..side.pow(dims as u32) {
        let mut k = [0i32; 4];
        let mut c = code;
        for a in (0..dims).rev() {
            k[a] = (c % side) as i32 - r;
            c /= side;
        }
        let nrm2: i32 = k.iter().map(|x| x * x).sum();
        if nrm2 == 0 || nrm2 > max_k2 {
            continue;
        }
        if k.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
            continue;
        }
        let (cos_coef, sin_coef) = if amplitude > 0.0 {
            (
                rng.gen_range(-amplitude..amplitude),
                rng.gen_range(-amplitude..amplitude),
            )
        } else {
            (0.0, 0.0)
        };
        modes.push(TrigMode {
            k,
            cos_coef,
            sin_coef,
        });
    }
    TrigPoly::new(modes, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_dotted_keys() {
        let cfg = RunConfig::parse(
            "grid.n = 2\ngrid.points = 8\nmetric.preset = \"hermitian_nonkahler\"\n\
             metric.param = 0.3\nflow.dt_max = 1e-3\nrng_seed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.grid.n, 2);
        assert_eq!(cfg.flow.dt_max, 1e-3);
        assert_eq!(
            cfg.flow.snapshot_interval,
            StepControl::default().snapshot_interval
        );
        assert_eq!(cfg.monitors.holder.rng_seed, 7);
        assert_eq!(cfg.source, SourceSpec::Zero);
    }

    #[test]
    fn unknown_preset_is_echoed() {
        let e = RunConfig::parse("metric.preset = \"bogus_metric\"\n").unwrap_err();
        assert!(
            matches!(&e, Error::Config(m) if m.contains("bogus_metric")),
            "{e}"
        );
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            RunConfig::parse("flow.dtmax = 1\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sources() {
        let cfg = RunConfig::parse(
            "source.kind = \"random\"\nsource.amplitude = 0.01\nsource.max_k2 = 4\ngrid.n = 2\ngrid.points = 8\n",
        )
        .unwrap();
        let g = cfg.build_metric().unwrap();
        let s = cfg.build_source(&g).unwrap();
        assert!(s.f.sup_abs() > 0.0 && s.exact.is_none());
        let p = random_source(&g.grid, 0.01, 4, 0);
        // |k|^2 = 1, 2, 3, 4 give 8, 24, 32 and 8 + 16 vectors
        assert_eq!(p.modes.len(), 88 / 2);
        assert!(p.modes.iter().all(|m| m.cos_coef.abs() <= 0.01));
    }

    #[test]
    fn manufactured_truth() {
        let cfg = RunConfig::parse(
            "source.kind = \"manufactured\"\nsource.psi = \"cos:1,0:0.3\"\nsource.offset = 0.05\n\
             metric.preset = \"hermitian_nonkahler\"\nmetric.param = 0.3\ngrid.points = 16\n",
        )
        .unwrap();
        let g = cfg.build_metric().unwrap();
        let s = cfg.build_source(&g).unwrap();
        let t = s.exact.unwrap();
        assert_eq!(t.b, 0.05);
        assert!(integrate(&t.psi_tilde, &g.weights()).unwrap().abs() < 1e-15);
    }
}
