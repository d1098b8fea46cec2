//! System parameters and the on-disk run configuration.
//!
//! Run configurations are TOML files with flat keys:
//!
//! | key               | type          | required | meaning                                        |
//! |-------------------|---------------|----------|------------------------------------------------|
//! | `n_particles`     | integer       | yes      | chain length N                                 |
//! | `epsilon`         | float         | yes      | cell overlap, in (0, 1/2)                      |
//! | `lambda`          | float         | yes      | velocity-flip rate, > 0                        |
//! | `energies`        | float list    | yes      | initial energy of each particle (length N)     |
//! | `energy_levels`   | float list    | no       | allowed energies; defaults to distinct entries |
//! | `seed`            | integer       | no (1)   | run seed; negative values wrap to the upper half of u64 |
//! | `replicas`        | integer       | no (1)   | number of independent replicas                 |
//! | `horizon_macro`   | float         | no (1)   | macro-clock horizon, in [0, 1]                 |
//! | `times`           | float list    | no       | macro times for `limit`/`compare`              |
//! | `epsilon_ladder`  | float list    | no       | overlaps swept by `compare`/`rates`/`recollisions` |
//! | `lambdas`         | float list    | no       | flip rates swept by `rates`                    |
//! | `state_cap`       | integer       | no       | largest limit chain `build_chain` accepts      |
//! | `kernel_q`        | float         | no       | start position for `kernel`/`doeblin`          |
//! | `kernel_sign`     | integer ±1    | no       | start velocity sign for `kernel`               |
//! | `kernel_energy`   | float         | no       | particle energy for `kernel`/`doeblin`         |
//! | `kernel_times`    | float list    | no       | elapsed times for `kernel`                     |
//! | `grid`            | integer       | no       | grid points per axis for `kernel`/`doeblin`    |
//! | `doeblin_t0`      | float list    | no       | probe times for `doeblin`                      |
//! | `mixing_times`    | float list    | no       | times for the mixing-decay table               |
//! | `window_micro`    | float         | no       | recollision window on the micro clock          |
//! | `recollision_energies` | list of float pairs | no | two-particle energy pairs for `recollisions` |

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and numerical parameters of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_particles: usize,
    pub epsilon: f64,
    pub lambda: f64,
    /// Allowed energies, strictly increasing.
    pub energy_levels: Vec<f64>,
    /// Initial energy of each particle; every entry is one of `energy_levels`.
    pub energies: Vec<f64>,
    pub seed: u64,
    pub replicas: u64,
}

impl SystemConfig {
    /// Builds a validated config whose energy levels are the distinct entries
    /// of `energies`.
    pub fn new(epsilon: f64, lambda: f64, energies: &[f64]) -> Result<Self> {
        let config = SystemConfig {
            n_particles: energies.len(),
            epsilon,
            lambda,
            energy_levels: distinct_sorted(energies),
            energies: energies.to_vec(),
            seed: 1,
            replicas: 1,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replicas(mut self, replicas: u64) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("n_particles", "must be positive"));
        }
        if self.energies.len() != self.n_particles {
            return Err(Error::config(
                "energies",
                format!(
                    "has {} entries but n_particles = {}",
                    self.energies.len(),
                    self.n_particles
                ),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::config(
                "epsilon",
                format!("must lie in (0, 1/2), got {}", self.epsilon),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(
                "lambda",
                format!("must be positive and finite, got {}", self.lambda),
            ));
        }
        if self.energy_levels.is_empty() {
            return Err(Error::config("energy_levels", "must not be empty"));
        }
        for w in self.energy_levels.windows(2) {
            if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
                return Err(Error::config(
                    "energy_levels",
                    "must be strictly increasing",
                ));
            }
        }
        if let Some(&e) = self
            .energy_levels
            .iter()
            .find(|e| !(**e > 0.0 && e.is_finite()))
        {
            return Err(Error::config(
                "energy_levels",
                format!("energies must be positive and finite, got {e}"),
            ));
        }
        for (k, e) in self.energies.iter().enumerate() {
            if self.level_index(*e).is_none() {
                return Err(Error::config(
                    "energies",
                    format!("entry {} ({e}) is not one of the energy levels", k + 1),
                ));
            }
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas", "must be positive"));
        }
        Ok(())
    }

    /// Number of distinct energy levels N′.
    pub fn n_levels(&self) -> usize {
        self.energy_levels.len()
    }

    /// Position of `energy` in the level table, compared bit-for-bit.
    pub fn level_index(&self, energy: f64) -> Option<usize> {
        self.energy_levels
            .iter()
            .position(|l| l.to_bits() == energy.to_bits())
    }

    /// Speeds `sqrt(2 e)` of the energy levels, computed once per call.
    pub fn speeds(&self) -> Vec<f64> {
        self.energy_levels
            .iter()
            .map(|e| (2.0 * e).sqrt())
            .collect()
    }

    /// Level index of every particle.
    pub fn initial_levels(&self) -> Vec<usize> {
        self.energies
            .iter()
            .map(|e| self.level_index(*e).expect("validated config"))
            .collect()
    }
}

fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let set: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
    let mut out: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// A fully resolved run configuration: system parameters plus the
/// per-command extras, all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub horizon_macro: f64,
    pub times: Vec<f64>,
    pub epsilon_ladder: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub state_cap: usize,
    pub kernel_q: f64,
    pub kernel_sign: i8,
    pub kernel_energy: f64,
    pub kernel_times: Vec<f64>,
    pub grid: usize,
    pub doeblin_t0: Vec<f64>,
    pub mixing_times: Vec<f64>,
    pub window_micro: f64,
    pub recollision_energies: Vec<[f64; 2]>,
}

pub const DEFAULT_STATE_CAP: usize = 10_000;
pub const DEFAULT_EPSILON_LADDER: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_particles: Option<i64>,
    epsilon: Option<f64>,
    lambda: Option<f64>,
    energies: Option<Vec<f64>>,
    energy_levels: Option<Vec<f64>>,
    seed: Option<i64>,
    replicas: Option<i64>,
    horizon_macro: Option<f64>,
    times: Option<Vec<f64>>,
    epsilon_ladder: Option<Vec<f64>>,
    lambdas: Option<Vec<f64>>,
    state_cap: Option<i64>,
    kernel_q: Option<f64>,
    kernel_sign: Option<i64>,
    kernel_energy: Option<f64>,
    kernel_times: Option<Vec<f64>>,
    grid: Option<i64>,
    doeblin_t0: Option<Vec<f64>>,
    mixing_times: Option<Vec<f64>>,
    window_micro: Option<f64>,
    recollision_energies: Option<Vec<[f64; 2]>>,
}

const KNOWN_KEYS: &[&str] = &[
    "n_particles",
    "epsilon",
    "lambda",
    "energies",
    "energy_levels",
    "seed",
    "replicas",
    "horizon_macro",
    "times",
    "epsilon_ladder",
    "lambdas",
    "state_cap",
    "kernel_q",
    "kernel_sign",
    "kernel_energy",
    "kernel_times",
    "grid",
    "doeblin_t0",
    "mixing_times",
    "window_micro",
    "recollision_energies",
];

fn required<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(key, "missing required key"))
}

fn positive_count(value: i64, key: &str) -> Result<usize> {
    if value <= 0 {
        return Err(Error::config(key, format!("must be positive, got {value}")));
    }
    Ok(value as usize)
}

fn check_list(values: &[f64], key: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(key, "must not be empty"));
    }
    match values.iter().find(|v| !ok(**v)) {
        Some(v) => Err(Error::config(key, format!("{what}, got {v}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        for key in table.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::config(key, "unknown key"));
            }
        }
        for key in KNOWN_KEYS {
            if let Some(value) = table.get(*key) {
                // Type errors are reported per key so the message names it.
                let single: toml::Table = [(key.to_string(), value.clone())].into_iter().collect();
                if let Err(e) = RawConfig::deserialize(single) {
                    return Err(Error::config(key, e.message().to_string()));
                }
            }
        }
        let raw = RawConfig::deserialize(table)
            .map_err(|e| Error::config("config", e.message().to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let n_particles = positive_count(required(raw.n_particles, "n_particles")?, "n_particles")?;
        let epsilon = required(raw.epsilon, "epsilon")?;
        let lambda = required(raw.lambda, "lambda")?;
        let energies = required(raw.energies, "energies")?;
        let energy_levels = raw
            .energy_levels
            .unwrap_or_else(|| distinct_sorted(&energies));
        let system = SystemConfig {
            n_particles,
            epsilon,
            lambda,
            energy_levels,
            energies,
            seed: raw.seed.map_or(1, |s| s as u64),
            replicas: positive_count(raw.replicas.unwrap_or(1), "replicas")? as u64,
        };
        system.validate()?;

        let horizon_macro = raw.horizon_macro.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&horizon_macro) {
            return Err(Error::config(
                "horizon_macro",
                format!("must lie in [0, 1], got {horizon_macro}"),
            ));
        }
        let times = raw.times.unwrap_or_else(|| vec![0.25, 0.5]);
        check_list(
            &times,
            "times",
            |t| (0.0..=1.0).contains(&t),
            "times must lie in [0, 1]",
        )?;
        let epsilon_ladder = raw
            .epsilon_ladder
            .unwrap_or_else(|| DEFAULT_EPSILON_LADDER.to_vec());
        check_list(
            &epsilon_ladder,
            "epsilon_ladder",
            |e| e > 0.0 && e < 0.5,
            "overlaps must lie in (0, 1/2)",
        )?;
        let lambdas = raw.lambdas.unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        check_list(
            &lambdas,
            "lambdas",
            |l| l > 0.0 && l.is_finite(),
            "rates must be positive",
        )?;
        let state_cap = positive_count(
            raw.state_cap.unwrap_or(DEFAULT_STATE_CAP as i64),
            "state_cap",
        )?;
        let kernel_q = raw.kernel_q.unwrap_or(0.3);
        if !(0.0..=1.0).contains(&kernel_q) {
            return Err(Error::config(
                "kernel_q",
                format!("must lie in [0, 1], got {kernel_q}"),
            ));
        }
        let kernel_sign = match raw.kernel_sign.unwrap_or(1) {
            1 => 1,
            -1 => -1,
            other => {
                return Err(Error::config(
                    "kernel_sign",
                    format!("must be +1 or -1, got {other}"),
                ))
            }
        };
        let kernel_energy = raw.kernel_energy.unwrap_or(system.energy_levels[0]);
        if !(kernel_energy > 0.0 && kernel_energy.is_finite()) {
            return Err(Error::config(
                "kernel_energy",
                format!("must be positive, got {kernel_energy}"),
            ));
        }
        let kernel_times = raw.kernel_times.unwrap_or_else(|| vec![1.0]);
        check_list(
            &kernel_times,
            "kernel_times",
            |t| t > 0.0 && t.is_finite(),
            "t > 0 required",
        )?;
        let grid = positive_count(raw.grid.unwrap_or(100), "grid")?;
        let doeblin_t0 = raw.doeblin_t0.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]);
        check_list(
            &doeblin_t0,
            "doeblin_t0",
            |t| t > 0.0 && t.is_finite(),
            "t0 > 0 required",
        )?;
        let mixing_times = raw.mixing_times.unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
        check_list(
            &mixing_times,
            "mixing_times",
            |t| t > 0.0 && t.is_finite(),
            "t > 0 required",
        )?;
        if mixing_times
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::config("mixing_times", "must be strictly increasing"));
        }
        let window_micro = raw.window_micro.unwrap_or(4.0);
        if !(window_micro >= 0.0 && window_micro.is_finite()) {
            return Err(Error::config(
                "window_micro",
                format!("must be nonnegative, got {window_micro}"),
            ));
        }
        let recollision_energies = raw
            .recollision_energies
            .unwrap_or_else(|| vec![[0.5, 2.0], [0.5, 1.0]]);
        if recollision_energies.is_empty() {
            return Err(Error::config("recollision_energies", "must not be empty"));
        }
        for pair in &recollision_energies {
            if pair.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(Error::config(
                    "recollision_energies",
                    format!("energies must be positive, got {pair:?}"),
                ));
            }
        }
        Ok(RunConfig {
            system,
            horizon_macro,
            times,
            epsilon_ladder,
            lambdas,
            state_cap,
            kernel_q,
            kernel_sign,
            kernel_energy,
            kernel_times,
            grid,
            doeblin_t0,
            mixing_times,
            window_micro,
            recollision_energies,
        })
    }
}

impl RunConfig {
    /// Renders every key, defaults included. Parsing the text gives back an
    /// equal configuration.
    pub fn to_toml_string(&self) -> String {
        use toml::Value;
        let floats = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        let s = &self.system;
        let mut t = toml::Table::new();
        t.insert("n_particles".into(), Value::Integer(s.n_particles as i64));
        t.insert("epsilon".into(), Value::Float(s.epsilon));
        t.insert("lambda".into(), Value::Float(s.lambda));
        t.insert("energies".into(), floats(&s.energies));
        t.insert("energy_levels".into(), floats(&s.energy_levels));
        t.insert("seed".into(), Value::Integer(s.seed as i64));
        t.insert("replicas".into(), Value::Integer(s.replicas as i64));
        t.insert("horizon_macro".into(), Value::Float(self.horizon_macro));
        t.insert("times".into(), floats(&self.times));
        t.insert("epsilon_ladder".into(), floats(&self.epsilon_ladder));
        t.insert("lambdas".into(), floats(&self.lambdas));
        t.insert("state_cap".into(), Value::Integer(self.state_cap as i64));
        t.insert("kernel_q".into(), Value::Float(self.kernel_q));
        t.insert(
            "kernel_sign".into(),
            Value::Integer(self.kernel_sign.into()),
        );
        t.insert("kernel_energy".into(), Value::Float(self.kernel_energy));
        t.insert("kernel_times".into(), floats(&self.kernel_times));
        t.insert("grid".into(), Value::Integer(self.grid as i64));
        t.insert("doeblin_t0".into(), floats(&self.doeblin_t0));
        t.insert("mixing_times".into(), floats(&self.mixing_times));
        t.insert("window_micro".into(), Value::Float(self.window_micro));
        t.insert(
            "recollision_energies".into(),
            Value::Array(
                self.recollision_energies
                    .iter()
                    .map(|p| floats(p))
                    .collect(),
            ),
        );
        t.to_string()
    }
}
