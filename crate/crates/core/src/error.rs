use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration key is missing, malformed, or out of range.
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(
        "rejection sampling gave up after {attempts} attempts \
         (observed acceptance rate {acceptance:.3e})"
    )]
    RejectionBudget { attempts: u64, acceptance: f64 },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(
        "limit chain has {states} states, above the cap of {cap}; \
         sample trajectories with gillespie_run instead"
    )]
    StateSpaceCap { states: usize, cap: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// The simulator reached a state its own bookkeeping says is impossible.
    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical contract, as opposed to bad input
    /// or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Contract(_)
                | Error::RejectionBudget { .. }
                | Error::StateSpaceCap { .. }
                | Error::InsufficientSamples { .. }
                | Error::Internal(_)
        )
    }
}
