use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{collision_candidate, wall_candidate, Event, EventKind, GAP_TOLERANCE};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;
#[cfg(debug_assertions)]
use crate::state::ORDER_TOLERANCE;
use crate::state::{validate_state, MicroState};

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    event: Event,
    generation: u64,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.event.cmp_key(&other.event)
    }
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub event: Event,
    /// Energy levels of the pair just before a collision swapped them.
    pub swapped: Option<(usize, usize)>,
}

/// Queue-driven simulator.
///
/// Positions are stored lazily as `q_k(t) = q_ref[k] + p_k (t - t_ref[k])`,
/// refreshed only when `p_k` changes, so an event touches at most two
/// particles and five queue slots. Each slot (wall of `k`, flip of `k`,
/// contact of pair `k`) carries a generation counter; a popped entry whose
/// generation is behind its slot was invalidated and is discarded.
#[derive(Debug, Clone)]
pub struct Simulator {
    epsilon: f64,
    lambda: f64,
    levels_table: Vec<f64>,
    q_ref: Vec<f64>,
    t_ref: Vec<f64>,
    p: Vec<f64>,
    level: Vec<usize>,
    next_flip: Vec<f64>,
    now: f64,
    heap: BinaryHeap<Reverse<Scheduled>>,
    wall_gen: Vec<u64>,
    flip_gen: Vec<u64>,
    pair_gen: Vec<u64>,
    events: u64,
    ties: u64,
    last_time: f64,
    #[cfg(debug_assertions)]
    config: SystemConfig,
}

impl Simulator {
    pub fn new(config: &SystemConfig, state: MicroState) -> Result<Self> {
        let report = validate_state(&state, config);
        if let Some(v) = report.first() {
            return Err(Error::Contract(format!("invalid initial state: {v}")));
        }
        let n = state.len();
        let mut sim = Simulator {
            epsilon: config.epsilon,
            lambda: config.lambda,
            levels_table: config.energy_levels.clone(),
            t_ref: vec![state.t; n],
            q_ref: state.q,
            p: state.p,
            level: state.level,
            next_flip: state.next_flip,
            now: state.t,
            heap: BinaryHeap::with_capacity(4 * n),
            wall_gen: vec![0; n],
            flip_gen: vec![0; n],
            pair_gen: vec![0; n.saturating_sub(1)],
            events: 0,
            ties: 0,
            last_time: f64::NEG_INFINITY,
            #[cfg(debug_assertions)]
            config: config.clone(),
        };
        for k in 0..n {
            sim.schedule_flip(k);
            sim.schedule_wall(k);
        }
        for k in 0..n.saturating_sub(1) {
            sim.schedule_pair(k)?;
        }
        Ok(sim)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Number of applied events that shared their time with the previous one.
    pub fn ties(&self) -> u64 {
        self.ties
    }

    pub fn levels(&self) -> &[usize] {
        &self.level
    }

    pub fn energies(&self) -> Vec<f64> {
        self.level.iter().map(|&l| self.levels_table[l]).collect()
    }

    fn position(&self, k: usize, t: f64) -> f64 {
        self.q_ref[k] + self.p[k] * (t - self.t_ref[k])
    }

    /// Full state at the current time.
    pub fn snapshot(&self) -> MicroState {
        MicroState {
            q: (0..self.p.len())
                .map(|k| self.position(k, self.now))
                .collect(),
            p: self.p.clone(),
            level: self.level.clone(),
            t: self.now,
            next_flip: self.next_flip.clone(),
        }
    }

    fn push(&mut self, kind: EventKind, time: f64, generation: u64) {
        self.heap.push(Reverse(Scheduled {
            event: Event { kind, time },
            generation,
        }));
    }

    fn schedule_flip(&mut self, k: usize) {
        self.flip_gen[k] += 1;
        self.push(EventKind::Flip(k), self.next_flip[k], self.flip_gen[k]);
    }

    fn schedule_wall(&mut self, k: usize) {
        self.wall_gen[k] += 1;
        let (kind, dt) = wall_candidate(k, self.position(k, self.now), self.p[k]);
        self.push(kind, self.now + dt, self.wall_gen[k]);
    }

    fn schedule_pair(&mut self, k: usize) -> Result<()> {
        self.pair_gen[k] += 1;
        let dt = collision_candidate(
            k,
            self.position(k, self.now),
            self.p[k],
            self.position(k + 1, self.now),
            self.p[k + 1],
            self.epsilon,
        )?;
        if let Some(dt) = dt {
            self.push(EventKind::Collision(k), self.now + dt, self.pair_gen[k]);
        }
        Ok(())
    }

    fn is_current(&self, s: &Scheduled) -> bool {
        let slot = match s.event.kind {
            EventKind::Flip(k) => self.flip_gen[k],
            EventKind::Collision(k) => self.pair_gen[k],
            EventKind::WallLeft(k) | EventKind::WallRight(k) => self.wall_gen[k],
        };
        slot == s.generation
    }

    /// Earliest pending event, discarding invalidated entries.
    pub fn peek(&mut self) -> Option<Event> {
        while let Some(Reverse(top)) = self.heap.peek() {
            if self.is_current(top) {
                return Some(top.event);
            }
            self.heap.pop();
        }
        None
    }

    /// Applies the next event if it occurs at or before `t_max`; otherwise
    /// moves the clock to `t_max` and returns `None`.
    pub fn step_until(&mut self, t_max: f64, rng: &mut RngStream) -> Result<Option<Outcome>> {
        match self.peek() {
            Some(e) if e.time <= t_max => self.step(rng).map(Some),
            _ => {
                self.now = self.now.max(t_max);
                Ok(None)
            }
        }
    }

    /// Applies the next event.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<Outcome> {
        let event = self
            .peek()
            .ok_or_else(|| Error::Internal("event queue is empty".into()))?;
        self.heap.pop();
        if event.time < self.now {
            return Err(Error::Internal(format!(
                "event {} at {} precedes current time {}",
                event.kind, event.time, self.now
            )));
        }
        if event.time == self.last_time {
            self.ties += 1;
        }
        self.last_time = event.time;
        self.now = event.time;
        self.events += 1;
        let t = self.now;
        let n = self.p.len();
        let mut swapped = None;
        match event.kind {
            EventKind::Flip(k) => {
                self.rebase(k, self.position(k, t));
                self.p[k] = -self.p[k];
                self.next_flip[k] = t + rng.exponential(self.lambda);
                self.schedule_flip(k);
                self.after_velocity_change(k, n)?;
            }
            EventKind::WallLeft(k) | EventKind::WallRight(k) => {
                let target = if matches!(event.kind, EventKind::WallLeft(_)) {
                    0.0
                } else {
                    1.0
                };
                let q = self.position(k, t);
                if (q - target).abs() > GAP_TOLERANCE {
                    return Err(Error::Internal(format!(
                        "stale event {}: particle at {q}",
                        event.kind
                    )));
                }
                self.rebase(k, target);
                self.p[k] = -self.p[k];
                self.after_velocity_change(k, n)?;
            }
            EventKind::Collision(k) => {
                let left = self.position(k, t).clamp(0.0, 1.0);
                let gap = self.position(k + 1, t) - left + 1.0 - self.epsilon;
                if gap.abs() > GAP_TOLERANCE || self.p[k] <= self.p[k + 1] {
                    return Err(Error::Internal(format!(
                        "stale event {}: gap {gap:.3e}",
                        event.kind
                    )));
                }
                swapped = Some((self.level[k], self.level[k + 1]));
                self.rebase(k, left);
                self.rebase(k + 1, (left - 1.0 + self.epsilon).clamp(0.0, 1.0));
                self.p.swap(k, k + 1);
                self.level.swap(k, k + 1);
                self.schedule_wall(k);
                self.schedule_wall(k + 1);
                if k > 0 {
                    self.schedule_pair(k - 1)?;
                }
                self.schedule_pair(k)?;
                if k + 2 < n {
                    self.schedule_pair(k + 1)?;
                }
            }
        }
        #[cfg(debug_assertions)]
        self.debug_check(event.kind)?;
        Ok(Outcome { event, swapped })
    }

    fn rebase(&mut self, k: usize, q: f64) {
        self.q_ref[k] = q;
        self.t_ref[k] = self.now;
    }

    fn after_velocity_change(&mut self, k: usize, n: usize) -> Result<()> {
        self.schedule_wall(k);
        if k > 0 {
            self.schedule_pair(k - 1)?;
        }
        if k + 1 < n {
            self.schedule_pair(k)?;
        }
        Ok(())
    }

    /// Checks the invariants touched by the event just applied.
    #[cfg(debug_assertions)]
    fn debug_check(&self, kind: EventKind) -> Result<()> {
        let n = self.p.len();
        let k = kind.index();
        let lo = k.saturating_sub(1);
        let hi = (k + 2).min(n);
        for j in lo..hi {
            let q = self.position(j, self.now);
            if !(-ORDER_TOLERANCE..=1.0 + ORDER_TOLERANCE).contains(&q) {
                return Err(Error::Internal(format!(
                    "particle {} left its cell: {q}",
                    j + 1
                )));
            }
            let speed = (2.0 * self.config.energy_levels[self.level[j]]).sqrt();
            if self.p[j].abs().to_bits() != speed.to_bits() {
                return Err(Error::Internal(format!(
                    "particle {} has off-table speed",
                    j + 1
                )));
            }
            if j + 1 < n {
                let gap = self.position(j + 1, self.now) - self.position(j, self.now) + 1.0
                    - self.epsilon;
                if gap < -ORDER_TOLERANCE {
                    return Err(Error::Internal(format!(
                        "ordering violated at pair {} by {:.3e}",
                        j + 1,
                        -gap
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microsim::{apply_event, next_event};
    use crate::state::sample_gibbs_conditioned;

    /// Queue-driven and scan-driven stepping must produce the same events.
    #[test]
    fn matches_scan_reference() {
        let cfg = SystemConfig::new(0.05, 1.3, &[0.5, 1.0, 2.0, 0.5, 3.0]).unwrap();
        for r in 0..20 {
            let mut rng0 = RngStream::new(77, r);
            let state = sample_gibbs_conditioned(&cfg, &mut rng0).unwrap();
            let mut rng_a = rng0.clone();
            let mut rng_b = rng0;
            let mut sim = Simulator::new(&cfg, state.clone()).unwrap();
            let mut s = state;
            for _ in 0..2000 {
                let a = sim.step(&mut rng_a).unwrap().event;
                let b = next_event(&s, &cfg).unwrap();
                apply_event(&mut s, &b, &cfg, &mut rng_b).unwrap();
                assert_eq!(a.kind, b.kind);
                assert!((a.time - b.time).abs() < 1e-9 * (1.0 + a.time));
            }
            let snap = sim.snapshot();
            assert_eq!(snap.level, s.level);
            assert_eq!(snap.p, s.p);
            for (x, y) in snap.q.iter().zip(&s.q) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn triangle_wave_without_flips() {
        // No flips: exact reflection at both walls.
        let cfg = SystemConfig::new(0.1, 1.0, &[2.0]).unwrap();
        let state =
            MicroState::from_parts(&cfg, vec![0.3], vec![2.0], vec![f64::INFINITY]).unwrap();
        let mut sim = Simulator::new(&cfg, state).unwrap();
        let mut rng = RngStream::new(0, 0);
        let fold = |x: f64| {
            let r = x.rem_euclid(2.0);
            if r <= 1.0 {
                r
            } else {
                2.0 - r
            }
        };
        for i in 1..200 {
            let t = i as f64 * 0.137;
            while sim.step_until(t, &mut rng).unwrap().is_some() {}
            let q = sim.snapshot().q[0];
            assert!((q - fold(0.3 + 2.0 * t)).abs() < 1e-11, "t={t}");
        }
    }
}
