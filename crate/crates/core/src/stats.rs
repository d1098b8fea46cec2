//! Estimators comparing simulated chains with the limiting process.

use crate::error::{Error, Result};
use crate::limit::StateSpace;
use crate::path::{CollisionLog, EnergyPath};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Counts of energy vectors at a fixed time, indexed like the
/// [`StateSpace`] they were collected against.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl EmpiricalDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// 95% half-width bound for the TV distance between this estimate and
    /// its mean: `Z95 · ½ Σ_i sd(p̂_i)`.
    pub fn tv_ci(&self) -> f64 {
        let n = self.total.max(1) as f64;
        0.5 * Z95
            * self
                .probabilities()
                .iter()
                .map(|p| (p * (1.0 - p) / n).sqrt())
                .sum::<f64>()
    }
}

/// Tallies the value of each path at time `t` (cadlag: the last jump at or
/// before `t` counts).
pub fn empirical_distribution(
    paths: &[EnergyPath],
    t: f64,
    space: &StateSpace,
) -> Result<EmpiricalDistribution> {
    let mut counts = vec![0u64; space.len()];
    for (i, path) in paths.iter().enumerate() {
        let value = path.value_at(t).map_err(|_| {
            Error::Contract(format!("path {i} ends at {} before t = {t}", path.end))
        })?;
        let idx = space.index_of(value).ok_or_else(|| {
            Error::Contract(format!(
                "path {i} visits {value:?}, outside the state space"
            ))
        })?;
        counts[idx] += 1;
    }
    Ok(EmpiricalDistribution {
        counts,
        total: paths.len() as u64,
    })
}

/// `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!(
            "state spaces differ: {} vs {} states",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// TV distance between the laws of two samples of energy vectors, over the
/// states either sample visits, with the sum of both sampling CIs. Used when
/// the limit chain is too large to solve.
pub fn sample_tv(a: &[&[f64]], b: &[&[f64]]) -> (f64, f64) {
    use std::collections::BTreeMap;
    let key = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let mut table: BTreeMap<Vec<u64>, (u64, u64)> = BTreeMap::new();
    for v in a {
        table.entry(key(v)).or_default().0 += 1;
    }
    for v in b {
        table.entry(key(v)).or_default().1 += 1;
    }
    let (na, nb) = (a.len().max(1) as f64, b.len().max(1) as f64);
    let mut tv = 0.0;
    let mut ci = 0.0;
    for (ca, cb) in table.values() {
        let (pa, pb) = (*ca as f64 / na, *cb as f64 / nb);
        tv += 0.5 * (pa - pb).abs();
        ci += 0.5 * Z95 * ((pa * (1.0 - pa) / na).sqrt() + (pb * (1.0 - pb) / nb).sqrt());
    }
    (tv, ci)
}

/// Exponential rate on the macro clock with a normal-approximation 95% CI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Number of observed first collisions.
    pub events: usize,
    /// Total observed macro time.
    pub exposure: f64,
}

impl RateEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    pub fn overlaps(&self, other: &RateEstimate) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

pub const MIN_RATE_SAMPLES: usize = 100;

/// Maximum-likelihood exponential rate of the first collision of pair `k`
/// (1-based), from logs of independent runs. Runs with no collision of that
/// pair are right-censored at their horizon.
pub fn swap_rate_estimate(logs: &[CollisionLog], k: usize) -> Result<RateEstimate> {
    let mut events = 0usize;
    let mut exposure = 0.0;
    for log in logs {
        match log.times_of(k).next() {
            Some(t) => {
                events += 1;
                exposure += t * log.epsilon;
            }
            None => exposure += log.horizon_micro * log.epsilon,
        }
    }
    if events < MIN_RATE_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_RATE_SAMPLES,
            got: events,
        });
    }
    let rate = events as f64 / exposure;
    let half = Z95 * rate / (events as f64).sqrt();
    Ok(RateEstimate {
        rate,
        ci_lo: rate - half,
        ci_hi: rate + half,
        events,
        exposure,
    })
}

/// Empirical `P(number of collisions of pair k >= n)` for each threshold.
pub fn jump_count_tail(logs: &[CollisionLog], k: usize, thresholds: &[usize]) -> Vec<f64> {
    let counts: Vec<usize> = logs
        .iter()
        .map(|log| crate::path::count_collisions(log, k))
        .collect();
    let total = counts.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&n| counts.iter().filter(|&&c| c >= n).count() as f64 / total)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecollisionReport {
    pub label: String,
    pub window_micro: f64,
    /// Collisions whose follow-up window lies inside the observed run.
    pub collisions: usize,
    /// Of those, how many were followed by another collision of the same
    /// pair strictly within the window.
    pub recollisions: usize,
}

impl RecollisionReport {
    pub fn fraction(&self) -> f64 {
        if self.collisions == 0 {
            0.0
        } else {
            self.recollisions as f64 / self.collisions as f64
        }
    }

    /// 95% Wald half-width.
    pub fn ci(&self) -> f64 {
        let n = self.collisions.max(1) as f64;
        let f = self.fraction();
        Z95 * (f * (1.0 - f) / n).sqrt()
    }
}

/// Fraction of collisions followed by another collision of the same pair
/// within `window_micro` micro time.
pub fn recollision_stats(
    logs: &[CollisionLog],
    window_micro: f64,
    label: &str,
) -> RecollisionReport {
    let mut collisions = 0;
    let mut recollisions = 0;
    for log in logs {
        let mut last_by_pair: std::collections::HashMap<usize, f64> = Default::default();
        let mut next_of: Vec<Option<f64>> = vec![None; log.records.len()];
        for (i, r) in log.records.iter().enumerate().rev() {
            next_of[i] = last_by_pair.get(&r.k).copied();
            last_by_pair.insert(r.k, r.time);
        }
        for (r, next) in log.records.iter().zip(next_of) {
            if r.time + window_micro > log.horizon_micro {
                continue;
            }
            collisions += 1;
            if next.is_some_and(|t| t - r.time < window_micro) {
                recollisions += 1;
            }
        }
    }
    RecollisionReport {
        label: label.to_string(),
        window_micro,
        collisions,
        recollisions,
    }
}

/// Label for the velocity ratio of two energies, `sqrt(max / min)`.
pub fn ratio_label(a: f64, b: f64) -> String {
    format!("{:.6}", (a.max(b) / a.min(b)).sqrt())
}

/// True when `values` never increases by more than the allowance of the later
/// point, i.e. `values[i+1] <= values[i] + allowance[i+1]`.
pub fn nonincreasing_within(values: &[f64], allowance: &[f64]) -> bool {
    values
        .windows(2)
        .zip(allowance.iter().skip(1))
        .all(|(w, a)| w[1] <= w[0] + a)
}
