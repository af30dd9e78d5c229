//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or scaled parameter violates its invariants.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A closed-form expression was evaluated outside its domain
    /// (typically μ ≥ 1, where the below-threshold forms diverge).
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller combined arguments incompatibly (e.g. a phase-space
    /// state whose shape does not match the requested representation).
    #[error("usage error: {0}")]
    Usage(String),

    /// An estimator refused to produce a value (too few batches,
    /// window too short, unpaired input, ...).
    #[error("estimator error: {0}")]
    Estimator(String),

    /// A root bracket or minimizer failed; carries diagnostics.
    #[error("solver error: {0}")]
    Solver(String),

    /// Ensemble marked unreliable (too many divergent trajectories).
    #[error("unreliable ensemble: {0}")]
    Unreliable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
