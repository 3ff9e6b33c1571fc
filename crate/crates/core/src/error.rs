use std::path::PathBuf;

use crate::tree::TreeError;

/// Errors raised by the transport solvers, the nested recursion and the
/// experiment drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tree(#[from] TreeError),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("cost entry ({row}, {col}) is not finite: {value}")]
    NonFiniteCost { row: usize, col: usize, value: f64 },

    #[error("cost entry ({row}, {col}) is negative: {value}")]
    NegativeCost { row: usize, col: usize, value: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("regularization parameter is degenerate (cost matrix is identically zero)")]
    DegenerateGamma,

    #[error(
        "sinkhorn did not converge after {iterations} iterations (marginal error {marginal_err:e})"
    )]
    NotConverged {
        iterations: usize,
        marginal_err: f64,
    },

    #[error("numerical {0} in plain-domain sinkhorn; retry with log_domain enabled")]
    Numerical(&'static str),

    #[error("transport simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("trees are structurally incompatible: {0}")]
    StructureMismatch(String),

    #[error("subproblem at stage {stage}, node pair ({x_node}, {y_node}): {source}")]
    Subproblem {
        stage: usize,
        x_node: usize,
        y_node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
