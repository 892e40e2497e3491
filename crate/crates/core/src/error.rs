use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A weight distribution failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A run configuration or argument failed validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A series truncation could not reach the requested tolerance.
    #[error("increase precision budget: {0}")]
    PrecisionBudget(String),

    /// An empirical survival estimate hit zero on the fit grid.
    #[error("grid too long for replica budget: zero survival at t={0}")]
    GridTooLong(f64),

    /// A generating-function argument outside the region of convergence.
    #[error("series diverges: s={s} must lie in (0, d) with d={d}")]
    SeriesDiverges { s: f64, d: usize },

    /// A finite-state computation was asked for a state space that is too big.
    #[error("state space too large: {got} vertices, maximum {max}")]
    StateSpaceTooLarge { got: usize, max: usize },
}
