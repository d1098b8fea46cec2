//! The limiting energy-exchange process.
//!
//! Energies live on the sites of the chain and neighbours `(k, k+1)` swap
//! their energies at rate `γ(e_k, e_{k+1}) = ½ max(√(2 e_k), √(2 e_{k+1}))`.
//! The state space is the set of rearrangements of the initial energy
//! multiset, which adjacent swaps connect completely.

use std::collections::{BTreeMap, HashMap};

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::path::{Clock, EnergyPath};
use crate::rng::RngStream;

/// Poisson tail mass dropped by [`solve_distribution`]. The kept weights are
/// renormalized, so the L¹ error is at most twice this.
pub const UNIFORMIZATION_TAIL: f64 = 1e-12;

/// Swap rate of a neighbouring pair with energies `a` and `b`.
pub fn rate_gamma(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Contract(format!(
            "energies must be positive, got ({a}, {b})"
        )));
    }
    Ok(0.5 * (2.0 * a).sqrt().max((2.0 * b).sqrt()))
}

fn gamma_unchecked(a: f64, b: f64) -> f64 {
    0.5 * (2.0 * a).sqrt().max((2.0 * b).sqrt())
}

/// An energy vector `(e_1, …, e_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub e: Vec<f64>,
}

impl EnergyConfig {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        if e.is_empty() {
            return Err(Error::Contract("energy vector is empty".into()));
        }
        if let Some(x) = e.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::Contract(format!(
                "energies must be positive, got {x}"
            )));
        }
        Ok(EnergyConfig { e })
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// Number of distinct rearrangements, `N! / Π m_i!`, as a float.
    pub fn orbit_size(&self) -> f64 {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for x in &self.e {
            *counts.entry(x.to_bits()).or_default() += 1;
        }
        let log = ln_gamma(self.e.len() as f64 + 1.0)
            - counts
                .values()
                .map(|&m| ln_gamma(m as f64 + 1.0))
                .sum::<f64>();
        log.exp().round()
    }
}

fn key(e: &[f64]) -> Vec<u64> {
    e.iter().map(|x| x.to_bits()).collect()
}

/// Lexicographically ordered list of energy vectors with a reverse index.
/// Shared by the limit chain and empirical distributions so that
/// probability vectors line up entry for entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    states: Vec<Vec<f64>>,
    index: HashMap<Vec<u64>, usize>,
}

impl StateSpace {
    /// All rearrangements of `initial`, in lexicographic order.
    pub fn orbit(initial: &EnergyConfig) -> Self {
        let mut current = initial.e.clone();
        current.sort_by(f64::total_cmp);
        let mut states = vec![current.clone()];
        while next_permutation(&mut current) {
            states.push(current.clone());
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (key(s), i))
            .collect();
        StateSpace { states, index }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn index_of(&self, e: &[f64]) -> Option<usize> {
        self.index.get(&key(e)).copied()
    }
}

/// Rearranges `v` into the next permutation in lexicographic order; false
/// once the last one is reached.
fn next_permutation(v: &mut [f64]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Generator of the limiting jump process on the orbit of an initial
/// configuration. Swaps of equal energies leave the state unchanged and are
/// left out.
#[derive(Debug, Clone)]
pub struct LimitChain {
    pub space: StateSpace,
    /// Per state: `(target state, rate)` for every visible adjacent swap.
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// Per state: total outgoing rate, the negated diagonal.
    pub exit_rates: Vec<f64>,
    pub initial: usize,
}

impl LimitChain {
    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Generator as a dense matrix; only sensible for small chains.
    pub fn generator_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in self.transitions.iter().enumerate() {
            for &(j, r) in row {
                q[i][j] += r;
            }
            q[i][i] = -self.exit_rates[i];
        }
        q
    }

    /// Point mass on the initial configuration.
    pub fn initial_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        p[self.initial] = 1.0;
        p
    }

    /// `v ↦ v Q` for a row vector `v`.
    pub fn apply_generator(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v
            .iter()
            .zip(&self.exit_rates)
            .map(|(x, r)| -x * r)
            .collect();
        for (i, row) in self.transitions.iter().enumerate() {
            for &(j, r) in row {
                out[j] += v[i] * r;
            }
        }
        out
    }
}

/// Enumerates the orbit of `initial` and its swap generator. Fails if the
/// orbit has more than `cap` states.
pub fn build_chain(initial: &EnergyConfig, cap: usize) -> Result<LimitChain> {
    let size = initial.orbit_size();
    if size > cap as f64 {
        return Err(Error::StateSpaceCap {
            states: size.min(usize::MAX as f64) as usize,
            cap,
        });
    }
    let space = StateSpace::orbit(initial);
    let mut transitions = Vec::with_capacity(space.len());
    let mut exit_rates = Vec::with_capacity(space.len());
    let mut scratch = Vec::new();
    for state in space.states() {
        let mut row = Vec::new();
        for k in 0..state.len().saturating_sub(1) {
            if state[k] == state[k + 1] {
                continue;
            }
            scratch.clear();
            scratch.extend_from_slice(state);
            scratch.swap(k, k + 1);
            let j = space
                .index_of(&scratch)
                .ok_or_else(|| Error::Internal("swap left the orbit".into()))?;
            row.push((j, rate_gamma(state[k], state[k + 1])?));
        }
        exit_rates.push(row.iter().map(|(_, r)| r).sum());
        transitions.push(row);
    }
    let initial = space
        .index_of(&initial.e)
        .ok_or_else(|| Error::Internal("initial state missing from its orbit".into()))?;
    Ok(LimitChain {
        space,
        transitions,
        exit_rates,
        initial,
    })
}

/// Law of the process at macro time `t` started from the chain's initial
/// state, by uniformization: with `Λ >= max_i |Q_ii|` and `P = I + Q/Λ`,
/// `p(t) = Σ_k Poisson(Λt; k) p(0) P^k`.
pub fn solve_distribution(chain: &LimitChain, t: f64) -> Result<Vec<f64>> {
    solve_from(chain, &chain.initial_distribution(), t)
}

/// As [`solve_distribution`] from an arbitrary initial law.
pub fn solve_from(chain: &LimitChain, initial: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Contract(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    if initial.len() != chain.len() {
        return Err(Error::Contract("initial law has the wrong length".into()));
    }
    let max_exit = chain.exit_rates.iter().copied().fold(0.0, f64::max);
    if max_exit == 0.0 || t == 0.0 {
        return Ok(initial.to_vec());
    }
    let big_lambda = 1.05 * max_exit;
    let mean = big_lambda * t;
    let mut v = initial.to_vec();
    let mut acc = vec![0.0; v.len()];
    let mut weight_sum = 0.0;
    let mut k = 0usize;
    loop {
        let w = (-mean + k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0)).exp();
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += w * x;
        }
        weight_sum += w;
        if k as f64 > mean && 1.0 - weight_sum < UNIFORMIZATION_TAIL {
            break;
        }
        let qv = chain.apply_generator(&v);
        for (x, d) in v.iter_mut().zip(qv) {
            *x += d / big_lambda;
        }
        k += 1;
    }
    for a in acc.iter_mut() {
        *a = (*a / weight_sum).max(0.0);
    }
    Ok(acc)
}

/// Samples a path of the limiting process on `[0, horizon]` by the direct
/// jump-chain method. The total rate counts swaps of equal energies too;
/// they leave the path unchanged.
pub fn gillespie_run(
    initial: &EnergyConfig,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<EnergyPath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Contract(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    let mut e = initial.e.clone();
    let n = e.len();
    let mut path = EnergyPath::new(e.clone(), Clock::Macro);
    let mut rates = vec![0.0; n.saturating_sub(1)];
    let mut t = 0.0;
    loop {
        for k in 0..rates.len() {
            rates[k] = gamma_unchecked(e[k], e[k + 1]);
        }
        let total: f64 = rates.iter().sum();
        t += rng.exponential(total);
        if t > horizon {
            break;
        }
        let mut target = rng.uniform() * total;
        let mut chosen = rates.len() - 1;
        for (k, r) in rates.iter().enumerate() {
            if target < *r {
                chosen = k;
                break;
            }
            target -= r;
        }
        e.swap(chosen, chosen + 1);
        path.push(t, e.clone());
    }
    path.end = horizon;
    Ok(path)
}

type Occupation = Vec<bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct SsepReport {
    /// Constant exchange rate `γ(a, b)` with `a < b`.
    pub rate: f64,
    /// Entries where the two generators differ.
    pub mismatches: usize,
    pub passes: bool,
}

/// Compares the chain's generator, entry by entry, with the symmetric simple
/// exclusion process in which the sites holding the larger energy are
/// occupied and particles hop to empty neighbours at rate `γ(a, b)`.
pub fn ssep_generator_check(chain: &LimitChain) -> Result<SsepReport> {
    let mut values: Vec<f64> = chain.space.states()[0].clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() != 2 {
        return Err(Error::Contract(format!(
            "exclusion check needs exactly two distinct energies, found {}",
            values.len()
        )));
    }
    let (low, high) = (values[0], values[1]);
    let rate = 0.5 * (2.0 * high).sqrt();
    let n = chain.space.state(0).len();
    let occupied = chain.space.state(0).iter().filter(|x| **x == high).count();

    // exclusion-process generator over occupation vectors
    let mut ssep: Vec<(Occupation, BTreeMap<Occupation, f64>)> = Vec::new();
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize != occupied {
            continue;
        }
        let eta: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let mut row = BTreeMap::new();
        for k in 0..n - 1 {
            if eta[k] != eta[k + 1] {
                let mut next = eta.clone();
                next.swap(k, k + 1);
                *row.entry(next).or_insert(0.0) += rate;
            }
        }
        ssep.push((eta, row));
    }

    let mut mismatches = 0;
    if ssep.len() != chain.len() {
        mismatches += ssep.len().abs_diff(chain.len());
    }
    let to_energies =
        |eta: &[bool]| -> Vec<f64> { eta.iter().map(|&o| if o { high } else { low }).collect() };
    for (eta, row) in &ssep {
        let Some(i) = chain.space.index_of(&to_energies(eta)) else {
            mismatches += 1;
            continue;
        };
        let mut chain_row: BTreeMap<usize, f64> = BTreeMap::new();
        for &(j, r) in &chain.transitions[i] {
            *chain_row.entry(j).or_insert(0.0) += r;
        }
        let mut ssep_row: BTreeMap<usize, f64> = BTreeMap::new();
        for (target, r) in row {
            match chain.space.index_of(&to_energies(target)) {
                Some(j) => {
                    ssep_row.insert(j, *r);
                }
                None => mismatches += 1,
            }
        }
        let ssep_diag: f64 = row.values().sum();
        if ssep_diag != chain.exit_rates[i] {
            mismatches += 1;
        }
        for j in chain_row
            .keys()
            .chain(ssep_row.keys())
            .collect::<std::collections::BTreeSet<_>>()
        {
            if chain_row.get(j) != ssep_row.get(j) {
                mismatches += 1;
            }
        }
    }
    Ok(SsepReport {
        rate,
        mismatches,
        passes: mismatches == 0,
    })
}
