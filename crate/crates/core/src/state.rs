//! Microscopic state of the chain and the Gibbs-conditioned initial measure.

use std::fmt;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Absolute slack allowed on the ordering constraint `q_{k+1} >= q_k - 1 + ε`.
pub const ORDER_TOLERANCE: f64 = 1e-12;

/// Attempts allowed when sampling positions uniformly on the accessible set.
pub const REJECTION_BUDGET: u64 = 1_000_000;

/// Exact state of the event-driven chain at micro time `t`.
///
/// Velocities are `±speed[level]` with the speed table computed once from the
/// energy levels, so `level` is the authoritative energy record and `p` only
/// ever changes by negation or by swapping with a neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Index into the energy-level table for each particle.
    pub level: Vec<usize>,
    pub t: f64,
    pub next_flip: Vec<f64>,
}

impl MicroState {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Energies `p_k^2 / 2`, read from the level table.
    pub fn energies(&self, config: &SystemConfig) -> Vec<f64> {
        self.level
            .iter()
            .map(|&l| config.energy_levels[l])
            .collect()
    }

    /// Builds a state from explicit positions and signed velocities. Each
    /// `|p_k|` must be exactly one of the configured speeds.
    pub fn from_parts(
        config: &SystemConfig,
        q: Vec<f64>,
        p: Vec<f64>,
        next_flip: Vec<f64>,
    ) -> Result<Self> {
        let n = config.n_particles;
        if q.len() != n || p.len() != n || next_flip.len() != n {
            return Err(Error::Contract(format!(
                "state vectors must have length {n}"
            )));
        }
        let speeds = config.speeds();
        let level = p
            .iter()
            .enumerate()
            .map(|(k, v)| {
                speeds
                    .iter()
                    .position(|s| s.to_bits() == v.abs().to_bits())
                    .ok_or_else(|| {
                        Error::Contract(format!(
                            "|p_{}| = {} is not a configured speed",
                            k + 1,
                            v.abs()
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MicroState {
            q,
            p,
            level,
            t: 0.0,
            next_flip,
        })
    }
}

/// Uniform positions on `{q in [0,1]^n : q_{k+1} >= q_k - 1 + ε}` by
/// rejection from the unit cube.
pub fn sample_positions(n: usize, epsilon: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    let mut q = vec![0.0; n];
    'attempt: for _ in 0..REJECTION_BUDGET {
        // Coordinates are drawn left to right, so an attempt can be abandoned
        // at the first violated pair without biasing accepted draws.
        for k in 0..n {
            q[k] = rng.uniform();
            if k > 0 && q[k] < q[k - 1] - 1.0 + epsilon {
                continue 'attempt;
            }
        }
        return Ok(q);
    }
    Err(Error::RejectionBudget {
        attempts: REJECTION_BUDGET,
        acceptance: 0.0,
    })
}

/// Draws the initial state: positions uniform on the accessible set, each
/// velocity sign a fair coin, magnitudes from the configured energies, and an
/// exponential flip clock per particle.
pub fn sample_gibbs_conditioned(config: &SystemConfig, rng: &mut RngStream) -> Result<MicroState> {
    config.validate()?;
    let speeds = config.speeds();
    let level = config.initial_levels();
    let q = sample_positions(config.n_particles, config.epsilon, rng)?;
    let p = level.iter().map(|&l| rng.sign() * speeds[l]).collect();
    let next_flip = (0..config.n_particles)
        .map(|_| rng.exponential(config.lambda))
        .collect();
    Ok(MicroState {
        q,
        p,
        level,
        t: 0.0,
        next_flip,
    })
}

/// One violated state invariant. Particle and pair indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `q_{k+1} < q_k - 1 + ε` by `magnitude`.
    Ordering {
        k: usize,
        magnitude: f64,
    },
    ZeroVelocity {
        k: usize,
    },
    /// `q_k` outside `[0, 1]` by more than the tolerance.
    OutOfCell {
        k: usize,
        q: f64,
    },
    /// `|p_k|` is not the speed of the recorded energy level.
    Speed {
        k: usize,
        p: f64,
    },
    /// Flip clock scheduled in the past.
    StaleFlip {
        k: usize,
        next_flip: f64,
    },
    Shape,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Ordering { k, magnitude } => {
                write!(f, "ordering violated at pair {k} by {magnitude:.3e}")
            }
            Violation::ZeroVelocity { k } => write!(f, "zero velocity at particle {k}"),
            Violation::OutOfCell { k, q } => write!(f, "particle {k} left its cell: q = {q}"),
            Violation::Speed { k, p } => {
                write!(f, "particle {k} has off-table speed |p| = {}", p.abs())
            }
            Violation::StaleFlip { k, next_flip } => {
                write!(
                    f,
                    "particle {k} has a flip scheduled in the past at {next_flip}"
                )
            }
            Violation::Shape => write!(f, "state vectors disagree with n_particles"),
        }
    }
}

/// Reports every violated invariant of `s`; empty means the state is valid.
pub fn validate_state(s: &MicroState, config: &SystemConfig) -> Vec<Violation> {
    let n = config.n_particles;
    if s.q.len() != n || s.p.len() != n || s.level.len() != n || s.next_flip.len() != n {
        return vec![Violation::Shape];
    }
    let speeds = config.speeds();
    let mut out = Vec::new();
    for k in 0..n {
        let q = s.q[k];
        if !(-ORDER_TOLERANCE..=1.0 + ORDER_TOLERANCE).contains(&q) {
            out.push(Violation::OutOfCell { k: k + 1, q });
        }
        if s.p[k] == 0.0 {
            out.push(Violation::ZeroVelocity { k: k + 1 });
        } else if s.level[k] >= speeds.len()
            || s.p[k].abs().to_bits() != speeds[s.level[k]].to_bits()
        {
            out.push(Violation::Speed {
                k: k + 1,
                p: s.p[k],
            });
        }
        if s.next_flip[k] < s.t {
            out.push(Violation::StaleFlip {
                k: k + 1,
                next_flip: s.next_flip[k],
            });
        }
    }
    for k in 0..n.saturating_sub(1) {
        let bound = s.q[k] - 1.0 + config.epsilon;
        let magnitude = bound - s.q[k + 1];
        if magnitude > ORDER_TOLERANCE {
            out.push(Violation::Ordering {
                k: k + 1,
                magnitude,
            });
        }
    }
    out
}
