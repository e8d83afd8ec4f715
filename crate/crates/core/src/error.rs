use thiserror::Error;

/// Construction and validation failures for tabular models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("row {row} holds invalid probability {value}")]
    NegativeProbability { row: usize, value: f64 },
    #[error("empty probability vector")]
    EmptyDistribution,
    #[error("discount {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("corrupt model data: {0}")]
    Corrupt(&'static str),
}

/// Failures of the iterative solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}
