//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value is outside the mathematical domain of an operation
    /// (non-finite, non-positive where positivity is required, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A search space contains no feasible point.
    #[error("infeasible grid: {0}")]
    InfeasibleGrid(String),

    /// A numeric computation produced a non-finite value or failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A configuration value violates its invariants.
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
