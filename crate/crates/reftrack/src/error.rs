//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameter dimensions, non-positive
    /// scales, malformed config files, unknown keys.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation not defined for the requested kernel family.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Linear-algebra failure. For Cholesky breakdowns `detail` names the
    /// smallest pivot encountered.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An argument left its admissible domain (e.g. a tube domain outside
    /// the state box).
    #[error("domain error: {0}")]
    Domain(String),

    /// CSV / config text could not be parsed; carries the 1-based line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The optimizer could not produce a usable candidate.
    #[error("optimization error: {0}")]
    Optimization(String),

    /// Constrained training failed to find a feasible point where the caller
    /// required one.
    #[error("infeasible at k_bar={k_bar}: max constraint violation {max_violation:.3e}")]
    Infeasible { k_bar: usize, max_violation: f64 },

    /// The iterative trainer hit its horizon cap before all checks passed;
    /// carries the full per-iteration check trace for diagnosis.
    #[error("did not terminate by k_bar={k_bar_max}; {} iterations recorded", trace.len())]
    NonTermination { k_bar_max: usize, trace: Vec<crate::asymptotic::IterationRecord> },

    /// A documented caller contract was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
