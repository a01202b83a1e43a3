//! Error type shared by every module, with the CLI exit-code mapping.

use thiserror::Error;

/// Library-wide error.
#[derive(Debug, Error)]
pub enum DbvpError {
    /// Invalid argument passed to an operation (e.g. truncation order 0).
    #[error("argument error: {0}")]
    Argument(String),
    /// Malformed or inconsistent run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A symbol or coefficient evaluated to a non-finite value.
    #[error("evaluation error at {point}: {msg}")]
    Evaluation { point: String, msg: String },
    /// Loss of (strong) ellipticity: real root, non-positive margin, ...
    #[error("ellipticity error: {0}")]
    Ellipticity(String),
    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// κ⁺ + κ⁻ = 0 or a non-decaying rate.
    #[error("degenerate root pair: {0}")]
    DegeneratePair(String),
    /// Linear solver breakdown.
    #[error("solver error: {0}")]
    Solver(String),
    /// Requested feature outside the supported range.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Probe or quadrature failed its stability/convergence check.
    #[error("instability: {0}")]
    Instability(String),
    /// Filesystem error.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl DbvpError {
    /// Process exit code: 1 IO, 2 configuration, 3 numerical precondition,
    /// 4 probe instability.
    pub fn exit_code(&self) -> i32 {
        match self {
            DbvpError::Io(_) => 1,
            DbvpError::Config(_) | DbvpError::Argument(_) => 2,
            DbvpError::Instability(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn eval(point: impl Into<String>, msg: impl Into<String>) -> Self {
        DbvpError::Evaluation { point: point.into(), msg: msg.into() }
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, DbvpError>;
