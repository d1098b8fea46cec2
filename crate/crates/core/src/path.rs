//! Recorded outputs of a run: the piecewise-constant energy path and the
//! collision log.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    Micro,
    Macro,
}

impl fmt::Display for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clock::Micro => "micro",
            Clock::Macro => "macro",
        })
    }
}

/// Cadlag record of the energy vector. `values[i]` holds on
/// `[times[i], times[i + 1])`; the last value holds up to `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPath {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub clock: Clock,
    /// Time up to which the path is known.
    pub end: f64,
}

impl EnergyPath {
    pub fn new(initial: Vec<f64>, clock: Clock) -> Self {
        EnergyPath {
            times: vec![0.0],
            values: vec![initial],
            clock,
            end: 0.0,
        }
    }

    /// Appends a jump at `t`. Unchanged values are dropped; a jump at the
    /// same instant as the previous one replaces it.
    pub fn push(&mut self, t: f64, value: Vec<f64>) {
        let last = self.times.len() - 1;
        if t <= self.times[last] && last > 0 {
            self.values[last] = value;
            if self.values[last] == self.values[last - 1] {
                self.times.pop();
                self.values.pop();
            }
        } else if value != self.values[last] {
            self.times.push(t);
            self.values.push(value);
        }
        self.end = self.end.max(t);
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn final_value(&self) -> &[f64] {
        self.values.last().expect("path has an initial value")
    }

    /// Number of jumps (visible energy changes).
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// Value at `t`, i.e. the last value whose start time is `<= t`.
    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        if t < 0.0 || t > self.end {
            return Err(Error::Contract(format!(
                "path covers [0, {}], queried at {t}",
                self.end
            )));
        }
        let i = self.times.partition_point(|&s| s <= t);
        Ok(&self.values[i - 1])
    }
}

/// One collision: micro time, pair index `k` (1-based: particles `k` and
/// `k + 1`), and the two energies just before the swap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionRecord {
    pub time: f64,
    pub k: usize,
    pub e_before_k: f64,
    pub e_before_k1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionLog {
    pub records: Vec<CollisionRecord>,
    /// Micro time at which observation stopped.
    pub horizon_micro: f64,
    pub epsilon: f64,
}

impl CollisionLog {
    pub fn new(epsilon: f64) -> Self {
        CollisionLog {
            records: Vec::new(),
            horizon_micro: 0.0,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Times of the collisions of pair `k` (1-based).
    pub fn times_of(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.records
            .iter()
            .filter(move |r| r.k == k)
            .map(|r| r.time)
    }
}

/// Number of collisions of pair `k` (1-based) in the log.
pub fn count_collisions(log: &CollisionLog, k: usize) -> usize {
    log.records.iter().filter(|r| r.k == k).count()
}
