//! Event-driven simulation of a chain of noisy billiard particles that
//! exchange energy through rare collisions, together with the analytic
//! objects that describe its small-overlap limit.

pub mod config;
pub mod error;
pub mod limit;
pub mod microsim;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod state;
pub mod stats;
pub mod telegraph;

pub use config::{RunConfig, SystemConfig};
pub use error::{Error, Result};
pub use path::{count_collisions, Clock, CollisionLog, CollisionRecord, EnergyPath};
pub use rng::RngStream;
pub use state::{sample_gibbs_conditioned, validate_state, MicroState, Violation};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/limit.md")]
    mod limit {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
