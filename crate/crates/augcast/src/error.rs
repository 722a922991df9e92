//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by dataset ingestion, modelling, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file; `line` is 1-based and counts the header.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Input values outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structural invariant of a dataset or window set violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// Invalid configuration (hyperparameters, strategy, CLI arguments).
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure during training or forecasting.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
