//! Unit-time oscillation contraction and the exponential decay fit.

use serde::{Deserialize, Serialize};

use super::MonitorSeries;
use crate::error::{Error, Result};

/// Smallest `theta(m-1)` that enters a contraction ratio.
pub const THETA_SKIP: f64 = 1e-14;
/// Samples below this fraction of the initial value sit in round-off noise.
pub const RESOLUTION: f64 = 1e-10;
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub eta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
    /// Set when the decaying quantity vanishes identically.
    pub degenerate: bool,
}

/// Lower cut for `theta(m-1)` given `theta(0)`.
pub fn theta_floor(theta0: f64) -> f64 {
    THETA_SKIP.max(RESOLUTION * theta0)
}

/// `theta` at `t = 0, 1, 2, ...` up to the last record, interpolated linearly.
pub fn theta_at_integers(series: &MonitorSeries) -> Vec<(f64, f64)> {
    let r = &series.records;
    let Some(last) = r.last() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut m = 0usize;
    let mut i = 0usize;
    while m as f64 <= last.t + 1e-9 {
        let t = m as f64;
        while i + 1 < r.len() && r[i + 1].t < t - 1e-9 {
            i += 1;
        }
        let v = if (r[i].t - t).abs() <= 1e-9 {
            r[i].osc_u
        } else if i + 1 < r.len() && (r[i + 1].t - t).abs() <= 1e-9 {
            r[i + 1].osc_u
        } else if i + 1 < r.len() && r[i].t < t && r[i + 1].t > t {
            let w = (t - r[i].t) / (r[i + 1].t - r[i].t);
            (1.0 - w) * r[i].osc_u + w * r[i + 1].osc_u
        } else {
            break;
        };
        out.push((t, v));
        m += 1;
    }
    out
}

/// Least squares `y = a + b t`; returns `(a, b, r^2)`.
pub fn linear_fit(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    let b = if stt > 0.0 { sty / stt } else { 0.0 };
    let a = my - b * mt;
    let r2 = if syy > 0.0 {
        let res: f64 = ts
            .iter()
            .zip(ys)
            .map(|(t, y)| (y - a - b * t).powi(2))
            .sum();
        (1.0 - res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (a, b, r2)
}

/// Contraction factor `max theta(m)/theta(m-1)` over `m >= 2` and a
/// log-linear fit of `sup |d phi-tilde / dt|`.
///
/// Ratios whose denominator is below `theta_floor(theta(0))` are skipped;
/// with none left the factor is 0. The fit uses the second half of the
/// samples resolved above round-off, extended back to at least
/// `MIN_FIT_SAMPLES` when that half is shorter.
pub fn contraction_and_decay(series: &MonitorSeries) -> Result<(f64, DecayFit)> {
    let theta = theta_at_integers(series);
    if theta.len() < 3 {
        return Err(Error::SeriesTooShort {
            reason: format!("{} integer times, need 3", theta.len()),
        });
    }
    let floor = theta_floor(theta[0].1);
    let delta = theta
        .windows(2)
        .skip(1)
        .filter(|w| w[0].1 >= floor)
        .map(|w| w[1].1 / w[0].1)
        .fold(0.0, f64::max);

    let r = &series.records;
    let y0 = r[0].sup_dphitilde_dt;
    if !(y0 > 0.0) {
        let t = r.last().map_or(0.0, |l| l.t);
        return Ok((
            delta,
            DecayFit {
                eta: 0.0,
                c: 0.0,
                r_squared: 0.0,
                window: (r[0].t, t),
                samples: r.len(),
                degenerate: true,
            },
        ));
    }
    let cut = RESOLUTION * y0;
    let resolved: Vec<(f64, f64)> = r
        .iter()
        .take_while(|rec| rec.sup_dphitilde_dt >= cut)
        .map(|rec| (rec.t, rec.sup_dphitilde_dt))
        .collect();
    if resolved.len() < MIN_FIT_SAMPLES {
        return Err(Error::SeriesTooShort {
            reason: format!(
                "{} resolved decay samples, need {MIN_FIT_SAMPLES}",
                resolved.len()
            ),
        });
    }
    let half = resolved.len() / 2;
    let start = half.min(resolved.len() - MIN_FIT_SAMPLES);
    let win = &resolved[start..];
    let ts: Vec<f64> = win.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = win.iter().map(|p| p.1.ln()).collect();
    let (a, b, r2) = linear_fit(&ts, &ys);
    Ok((
        delta,
        DecayFit {
            eta: -b,
            c: a.exp(),
            r_squared: r2,
            window: (ts[0], ts[ts.len() - 1]),
            samples: win.len(),
            degenerate: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitors::MonitorRecord;

    fn series(f: impl Fn(f64) -> f64, horizon: usize, per_unit: usize) -> MonitorSeries {
        let records = (0..=horizon * per_unit)
            .map(|k| {
                let t = k as f64 / per_unit as f64;
                MonitorRecord {
                    t,
                    osc_u: f(t),
                    sup_dphitilde_dt: f(t),
                    ..MonitorRecord::default()
                }
            })
            .collect();
        MonitorSeries { records }
    }

    #[test]
    fn exponential_series() {
        let (delta, fit) = contraction_and_decay(&series(|t| (-t).exp(), 10, 10)).unwrap();
        assert!((delta - (-1.0f64).exp()).abs() < 1e-12);
        assert!((fit.eta - 1.0).abs() < 1e-10);
        assert!((fit.c - 1.0).abs() < 1e-8);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.samples >= MIN_FIT_SAMPLES);
    }

    #[test]
    fn stationary_series() {
        let (delta, fit) = contraction_and_decay(&series(|_| 0.0, 4, 10)).unwrap();
        assert_eq!(delta, 0.0);
        assert!(fit.degenerate);
    }

    #[test]
    fn short_series() {
        assert!(matches!(
            contraction_and_decay(&series(|t| (-t).exp(), 1, 10)),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn interpolates_between_snapshots() {
        // snapshots at odd tenths straddle the integers
        let mut s = series(|t| 1.0 + t, 3, 10);
        s.records
            .retain(|r| ((r.t * 10.0).round() as i64) % 2 == 1 || r.t == 0.0);
        let th = theta_at_integers(&s);
        assert_eq!(th.len(), 3);
        for (t, v) in th {
            assert!((v - (1.0 + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn unresolved_ratios_are_skipped() {
        // theta collapses to round-off after t = 1
        let s = series(
            |t| {
                if t < 1.5 {
                    (-10.0 * t).exp()
                } else {
                    1e-16 * (1.0 + t)
                }
            },
            4,
            10,
        );
        let th = theta_at_integers(&s);
        let (delta, _) = contraction_and_decay(&s).unwrap();
        assert!(th[2].1 / th[1].1 < 1.0);
        assert!((delta - th[2].1 / th[1].1).abs() < 1e-15);
    }
}
