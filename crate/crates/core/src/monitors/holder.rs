//! Sampled parabolic Hölder seminorm of the evolving metric.
//!
//! Distance between `(x, s)` and `(y, t)` is `max(|x - y|, |s - t|^{1/2})`
//! with `|x - y|` the periodic distance. The quotient is maximized over
//! matrix entries. Random pairs are followed by a coordinate hill climb from
//! the best few, so the result stays a lower bound of the true supremum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::herm::HermMat;
use crate::spectral::MatrixField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub sample_pairs: usize,
    pub rng_seed: u64,
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            epsilon: 0.5,
            sample_pairs: 20000,
            rng_seed: 0,
        }
    }
}

impl HolderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid Hölder config {self:?}"
            )));
        }
        Ok(())
    }
}

/// Packed Hermitian samples of one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedSnapshot {
    pub t: f64,
    pub stride: usize,
    pub values: Vec<f64>,
}

impl PackedSnapshot {
    pub fn from_field(t: f64, m: &MatrixField) -> Self {
        let n = m.grid.complex_dim;
        let stride = n * n;
        let mut values = vec![0.0; stride * m.samples.len()];
        for (chunk, s) in values.chunks_mut(stride).zip(&m.samples) {
            s.pack_hermitian(chunk);
        }
        Self { t, stride, values }
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.stride..(idx + 1) * self.stride]
    }

    pub fn matrix(&self, n: usize, idx: usize) -> HermMat {
        HermMat::unpack_hermitian(n, self.at(idx))
    }
}

fn entry_gap(a: &[f64], b: &[f64]) -> f64 {
    match a.len() {
        1 => (a[0] - b[0]).abs(),
        _ => {
            let d0 = (a[0] - b[0]).abs();
            let d1 = (a[1] - b[1]).abs();
            let d2 = (a[2] - b[2]).hypot(a[3] - b[3]);
            d0.max(d1).max(d2)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Pair {
    p: usize,
    sp: usize,
    q: usize,
    sq: usize,
}

struct Evaluator<'a> {
    grid: TorusGrid,
    snaps: &'a [&'a PackedSnapshot],
    alpha: f64,
}

impl Evaluator<'_> {
    fn quotient(&self, pr: &Pair) -> f64 {
        let a = self.snaps[pr.sp];
        let b = self.snaps[pr.sq];
        let dx = self.grid.torus_distance(pr.p, pr.q);
        let dt = (a.t - b.t).abs().sqrt();
        let d = dx.max(dt);
        if d == 0.0 {
            return 0.0;
        }
        entry_gap(a.at(pr.p), b.at(pr.q)) / d.powf(self.alpha)
    }

    /// Greedy ascent over single-axis moves of either endpoint and snapshot moves.
    fn climb(&self, mut pr: Pair, fixed_first_snapshot: bool) -> f64 {
        let mut best = self.quotient(&pr);
        let dims = self.grid.real_dim();
        let ns = self.snaps.len();
        loop {
            let mut improved = false;
            let mut candidates = Vec::with_capacity(4 * dims + 4);
            for axis in 0..dims {
                for d in [-1i64, 1] {
                    candidates.push(Pair {
                        p: self.grid.shifted(pr.p, axis, d),
                        ..pr
                    });
                    candidates.push(Pair {
                        q: self.grid.shifted(pr.q, axis, d),
                        ..pr
                    });
                }
            }
            for d in [-1i64, 1] {
                let sq = pr.sq as i64 + d;
                if sq >= 0 && (sq as usize) < ns {
                    candidates.push(Pair {
                        sq: sq as usize,
                        ..pr
                    });
                }
                let sp = pr.sp as i64 + d;
                if !fixed_first_snapshot && sp >= 0 && (sp as usize) < ns {
                    candidates.push(Pair {
                        sp: sp as usize,
                        ..pr
                    });
                }
            }
            for c in candidates {
                let v = self.quotient(&c);
                if v > best {
                    best = v;
                    pr = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }
}

const CLIMB_STARTS: usize = 8;

/// Samples `pairs` pairs. With `anchor = Some(s)` the first member always
/// lies on snapshot `s`; the second is drawn from all snapshots.
fn sampled_max(
    grid: TorusGrid,
    snaps: &[&PackedSnapshot],
    alpha: f64,
    pairs: usize,
    anchor: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let ev = Evaluator { grid, snaps, alpha };
    let len = grid.len();
    let mut top: Vec<(f64, Pair)> = Vec::with_capacity(CLIMB_STARTS + 1);
    for _ in 0..pairs {
        let pr = Pair {
            p: rng.gen_range(0..len),
            sp: anchor.unwrap_or_else(|| rng.gen_range(0..snaps.len())),
            q: rng.gen_range(0..len),
            sq: rng.gen_range(0..snaps.len()),
        };
        let v = ev.quotient(&pr);
        if top.len() < CLIMB_STARTS || v > top[top.len() - 1].0 {
            top.push((v, pr));
            top.sort_by(|a, b| b.0.total_cmp(&a.0));
            top.truncate(CLIMB_STARTS);
        }
    }
    top.iter()
        .map(|(_, pr)| ev.climb(*pr, anchor.is_some()))
        .fold(0.0, f64::max)
}

/// Sampled lower estimate of the seminorm over all snapshots with `t >= epsilon`.
pub fn holder_seminorm(snapshots: &[(f64, &MatrixField)], cfg: &HolderConfig) -> Result<f64> {
    cfg.validate()?;
    let packed: Vec<PackedSnapshot> = snapshots
        .iter()
        .filter(|(t, _)| *t >= cfg.epsilon)
        .map(|(t, m)| PackedSnapshot::from_field(*t, m))
        .collect();
    if packed.len() < 2 {
        return Err(Error::InsufficientSnapshots {
            found: packed.len(),
        });
    }
    let grid = snapshots[0].1.grid;
    let refs: Vec<&PackedSnapshot> = packed.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    Ok(sampled_max(
        grid,
        &refs,
        cfg.alpha,
        cfg.sample_pairs,
        None,
        &mut rng,
    ))
}

/// Running estimate over the growing region `t in [epsilon, T]`. Each new
/// snapshot contributes `sample_pairs` pairs with one member on it.
#[derive(Debug)]
pub struct HolderTracker {
    cfg: HolderConfig,
    grid: TorusGrid,
    rng: ChaCha8Rng,
    running: f64,
}

impl HolderTracker {
    pub fn new(grid: TorusGrid, cfg: HolderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            grid,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            running: 0.0,
        })
    }

    /// Updates with the newest snapshot (last of `history`); returns the running max.
    pub fn update(&mut self, history: &[&PackedSnapshot]) -> f64 {
        let eligible: Vec<&PackedSnapshot> = history
            .iter()
            .copied()
            .filter(|s| s.t >= self.cfg.epsilon)
            .collect();
        if eligible.is_empty() {
            return self.running;
        }
        let anchor = eligible.len() - 1;
        let v = sampled_max(
            self.grid,
            &eligible,
            self.cfg.alpha,
            self.cfg.sample_pairs,
            Some(anchor),
            &mut self.rng,
        );
        self.running = self.running.max(v);
        self.running
    }

    pub fn value(&self) -> f64 {
        self.running
    }
}
