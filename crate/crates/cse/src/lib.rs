//! Solver for competitive stationary equilibria (CSE) of a pure-exchange
//! economy with a continuum of agents, `n` consumption goods, a risk-free
//! bond in zero net supply, and idiosyncratic endowment risk.
//!
//! The pipeline is: closed-form intratemporal demand ([`demand`]) feeds the
//! agent's dynamic program ([`bellman`]), whose savings policy drives the
//! wealth-distribution operator ([`distribution`]); aggregation yields the
//! excess-demand function ([`excess`]), whose zero on the price simplex is
//! found by [`equilibrium`]. [`spreads`] runs endowment-risk comparative
//! statics and [`oracle`] holds independent brute-force cross-checks.

pub mod bellman;
pub mod demand;
pub mod distribution;
pub mod economy;
pub mod equilibrium;
pub mod excess;
pub mod io;
pub mod oracle;
pub mod spreads;
pub mod typed;

#[cfg(test)]
pub(crate) mod testutil;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CseError {
    #[error("invalid input: {0}")]
    Config(String),

    #[error("solver diagnostic: {what} (last gap {gap:.3e} after {iterations} iterations)")]
    NonConvergence {
        what: String,
        gap: f64,
        iterations: usize,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CseError>;
