use thiserror::Error;

use crate::operator::LiftedPoint;
use crate::signal::Signal;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (zero vector, δ ≥ 1, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Explicit materialization refused above a size guard.
    #[error("{what} refuses n = {n} (limit {limit}); use the implicit operators instead")]
    Guard {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("flatness projection did not converge after {iterations} iterations")]
    FlatNonConvergence { iterations: usize, last: Signal },

    #[error("no sample satisfies the model constraints: {0}")]
    Infeasible(String),

    #[error("vectors are parallel; orthogonal component vanished")]
    Parallel,

    #[error("solver breakdown: {reason}")]
    SolverBreakdown {
        reason: String,
        snapshot: Box<LiftedPoint>,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::FlatNonConvergence { .. }
                | Error::Infeasible(_)
                | Error::Parallel
                | Error::SolverBreakdown { .. }
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
