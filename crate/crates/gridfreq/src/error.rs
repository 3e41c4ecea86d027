//! Crate-wide error type with process exit-code mapping.

use thiserror::Error;

/// Errors produced by configuration validation, simulation, market clearing
/// and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad invariants, unresolved references,
    /// malformed curves, unparsable files.
    #[error("config error: {0}")]
    Config(String),

    /// Numeric failure during integration (non-finite state).
    #[error("numeric failure at t={t_s:.3} s (resource {}): {message}", .resource.as_deref().unwrap_or("-"))]
    Numeric {
        t_s: f64,
        resource: Option<String>,
        message: String,
    },

    /// Market clearing could not meet demand and/or the reserve requirement.
    #[error("market infeasible at t={t_s:.1} s: {shortfall_mw:.1} MW short ({message})")]
    Infeasible {
        t_s: f64,
        shortfall_mw: f64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for the CLI: 0 success, 2 config error,
    /// 3 runtime/numeric failure, 4 market infeasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric { .. } | Error::Io(_) => 3,
            Error::Infeasible { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
