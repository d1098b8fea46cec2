//! Exact event-driven simulation of the coupled chain.
//!
//! Between events every particle moves linearly, `dq_k = p_k dt`. Four kinds
//! of events change velocities:
//!
//! * `Flip(k)`: the rate-λ Poisson clock of particle `k` rings and `p_k`
//!   changes sign;
//! * `WallLeft(k)` / `WallRight(k)`: particle `k` reaches `q = 0` moving left
//!   or `q = 1` moving right and is reflected;
//! * `Collision(k)`: particles `k` and `k + 1` meet on the contact manifold
//!   `q_{k+1} = q_k - 1 + ε` with `p_k > p_{k+1}` and exchange momenta.
//!
//! [`next_event`] and [`apply_event`] operate on a full [`MicroState`] with an
//! O(N) scan; [`Simulator`] produces the same event sequence with a priority
//! queue and per-slot invalidation counters.

mod scheduler;

use std::fmt;

use rayon::prelude::*;

pub use scheduler::{Outcome, Simulator};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::path::{Clock, CollisionLog, CollisionRecord, EnergyPath};
use crate::rng::RngStream;
use crate::state::{sample_gibbs_conditioned, MicroState};

/// Largest negative gap (or wall overshoot) attributed to rounding. Anything
/// beyond this means an event was missed.
pub const GAP_TOLERANCE: f64 = 1e-9;

/// Particle or pair indices are 0-based here; `Display` prints the 1-based
/// labels used in reports and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Flip(usize),
    Collision(usize),
    WallLeft(usize),
    WallRight(usize),
}

impl EventKind {
    /// Tie-break precedence among simultaneous events: lower fires first.
    pub fn precedence(&self) -> u8 {
        match self {
            EventKind::Flip(_) => 0,
            EventKind::Collision(_) => 1,
            EventKind::WallLeft(_) => 2,
            EventKind::WallRight(_) => 3,
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            EventKind::Flip(k)
            | EventKind::Collision(k)
            | EventKind::WallLeft(k)
            | EventKind::WallRight(k) => k,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Flip(k) => write!(f, "Flip({})", k + 1),
            EventKind::Collision(k) => write!(f, "Collision({})", k + 1),
            EventKind::WallLeft(k) => write!(f, "WallLeft({})", k + 1),
            EventKind::WallRight(k) => write!(f, "WallRight({})", k + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    /// Micro time of occurrence.
    pub time: f64,
}

impl Event {
    /// Total order used to pick the next event: time, then precedence, then
    /// lowest index.
    pub(crate) fn cmp_key(&self, other: &Event) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.precedence().cmp(&other.kind.precedence()))
            .then(self.kind.index().cmp(&other.kind.index()))
    }
}

/// Time until particle at `q` with velocity `p` reaches a wall, and which.
pub(crate) fn wall_candidate(k: usize, q: f64, p: f64) -> (EventKind, f64) {
    if p < 0.0 {
        (EventKind::WallLeft(k), (q / -p).max(0.0))
    } else {
        (EventKind::WallRight(k), ((1.0 - q) / p).max(0.0))
    }
}

/// Time until pair `(k, k+1)` reaches contact, if it is closing.
pub(crate) fn collision_candidate(
    k: usize,
    q_left: f64,
    p_left: f64,
    q_right: f64,
    p_right: f64,
    epsilon: f64,
) -> Result<Option<f64>> {
    if p_left <= p_right {
        return Ok(None);
    }
    let gap = q_right - q_left + 1.0 - epsilon;
    if gap < -GAP_TOLERANCE {
        return Err(Error::Internal(format!(
            "pair {} is closing with negative gap {gap:.3e}",
            k + 1
        )));
    }
    Ok(Some(gap.max(0.0) / (p_left - p_right)))
}

/// Earliest event from `s`, found by scanning every candidate.
pub fn next_event(s: &MicroState, config: &SystemConfig) -> Result<Event> {
    let n = s.len();
    let mut best: Option<Event> = None;
    let mut consider = |e: Event| {
        if best.is_none_or(|b| e.cmp_key(&b).is_lt()) {
            best = Some(e);
        }
    };
    for k in 0..n {
        consider(Event {
            kind: EventKind::Flip(k),
            time: s.next_flip[k],
        });
        let (kind, dt) = wall_candidate(k, s.q[k], s.p[k]);
        consider(Event {
            kind,
            time: s.t + dt,
        });
    }
    for k in 0..n.saturating_sub(1) {
        if let Some(dt) =
            collision_candidate(k, s.q[k], s.p[k], s.q[k + 1], s.p[k + 1], config.epsilon)?
        {
            consider(Event {
                kind: EventKind::Collision(k),
                time: s.t + dt,
            });
        }
    }
    best.ok_or_else(|| Error::Contract("state has no particles".into()))
}

/// Advances every position to `e.time` and applies the velocity change.
pub fn apply_event(
    s: &mut MicroState,
    e: &Event,
    config: &SystemConfig,
    rng: &mut RngStream,
) -> Result<()> {
    if e.time < s.t {
        return Err(Error::Internal(format!(
            "stale event {} at {} before current time {}",
            e.kind, e.time, s.t
        )));
    }
    let dt = e.time - s.t;
    for (q, p) in s.q.iter_mut().zip(&s.p) {
        *q += p * dt;
    }
    s.t = e.time;
    let stale = |what: &str| Error::Internal(format!("stale event {}: {what}", e.kind));
    match e.kind {
        EventKind::Flip(k) => {
            if s.next_flip[k] != e.time {
                return Err(stale("flip clock was rescheduled"));
            }
            s.p[k] = -s.p[k];
            s.next_flip[k] = e.time + rng.exponential(config.lambda);
        }
        EventKind::WallLeft(k) => {
            if s.p[k] >= 0.0 || s.q[k].abs() > GAP_TOLERANCE {
                return Err(stale("particle is not at the left wall moving left"));
            }
            s.q[k] = 0.0;
            s.p[k] = -s.p[k];
        }
        EventKind::WallRight(k) => {
            if s.p[k] <= 0.0 || (s.q[k] - 1.0).abs() > GAP_TOLERANCE {
                return Err(stale("particle is not at the right wall moving right"));
            }
            s.q[k] = 1.0;
            s.p[k] = -s.p[k];
        }
        EventKind::Collision(k) => {
            let gap = s.q[k + 1] - s.q[k] + 1.0 - config.epsilon;
            if s.p[k] <= s.p[k + 1] || gap.abs() > GAP_TOLERANCE {
                return Err(stale("pair is not closing on contact"));
            }
            s.p.swap(k, k + 1);
            s.level.swap(k, k + 1);
            s.q[k] = s.q[k].clamp(0.0, 1.0);
            s.q[k + 1] = (s.q[k] - 1.0 + config.epsilon).clamp(0.0, 1.0);
        }
    }
    Ok(())
}

/// How long to simulate and when to stop early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLimits {
    pub horizon_micro: f64,
    /// Stop right after this many collisions, if set.
    pub max_collisions: Option<usize>,
}

impl RunLimits {
    pub fn horizon(horizon_micro: f64) -> Self {
        RunLimits {
            horizon_micro,
            max_collisions: None,
        }
    }
}

/// Simulates from a Gibbs-conditioned start up to micro time
/// `horizon_macro / ε`, recording the energy path on the macro clock.
pub fn run(
    config: &SystemConfig,
    horizon_macro: f64,
    rng: &mut RngStream,
) -> Result<(EnergyPath, CollisionLog)> {
    if !(0.0..=1.0).contains(&horizon_macro) {
        return Err(Error::Contract(format!(
            "macro horizon must lie in [0, 1], got {horizon_macro}"
        )));
    }
    let state = sample_gibbs_conditioned(config, rng)?;
    run_from(
        config,
        state,
        RunLimits::horizon(horizon_macro / config.epsilon),
        rng,
    )
}

/// Simulates from a given state until the limits are reached.
pub fn run_from(
    config: &SystemConfig,
    state: MicroState,
    limits: RunLimits,
    rng: &mut RngStream,
) -> Result<(EnergyPath, CollisionLog)> {
    let eps = config.epsilon;
    let mut sim = Simulator::new(config, state)?;
    let mut path = EnergyPath::new(sim.energies(), Clock::Macro);
    let mut log = CollisionLog::new(eps);
    while let Some(outcome) = sim.step_until(limits.horizon_micro, rng)? {
        if let (EventKind::Collision(k), Some((before_k, before_k1))) =
            (outcome.event.kind, outcome.swapped)
        {
            log.records.push(CollisionRecord {
                time: outcome.event.time,
                k: k + 1,
                e_before_k: config.energy_levels[before_k],
                e_before_k1: config.energy_levels[before_k1],
            });
            if before_k != before_k1 {
                path.push(outcome.event.time * eps, sim.energies());
            }
            if limits.max_collisions.is_some_and(|m| log.len() >= m) {
                break;
            }
        }
    }
    log.horizon_micro = sim.now();
    path.end = sim.now() * eps;
    Ok((path, log))
}

/// Runs replicas `0..replicas` in parallel, each on its own stream
/// `(config.seed, replica)`. Results come back ordered by replica index.
pub fn run_replicas(
    config: &SystemConfig,
    horizon_macro: f64,
    replicas: u64,
) -> Result<Vec<(EnergyPath, CollisionLog)>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| run(config, horizon_macro, &mut RngStream::new(config.seed, r)))
        .collect()
}

/// Runs replicas until each one's first collision (or the micro cap),
/// for first-collision rate estimates.
pub fn first_collision_replicas(
    config: &SystemConfig,
    cap_micro: f64,
    replicas: u64,
) -> Result<Vec<CollisionLog>> {
    let limits = RunLimits {
        horizon_micro: cap_micro,
        max_collisions: Some(1),
    };
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(config.seed, r);
            let state = sample_gibbs_conditioned(config, &mut rng)?;
            run_from(config, state, limits, &mut rng).map(|(_, log)| log)
        })
        .collect()
}
