//! Error type shared by every module.

use alloc::string::String;

/// Failures reported by the library.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a function.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },
    /// Structurally invalid input (non-monotone partition, bad index, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// An exhaustive computation would exceed the configured budget.
    #[error("resource error: {count} states exceed the budget of {budget}")]
    Budget { count: u128, budget: u128 },
    /// A series or normalization constant diverges.
    #[error("divergence: {0}")]
    Divergence(String),
    /// An iterative solver stopped before meeting its tolerance.
    #[error("no convergence after {iterations} iterations (relative energy change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },
}

/// Library result alias.
pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { what, detail: detail.into() }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::Validation(detail.into())
    }
}
