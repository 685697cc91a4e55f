use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the chain, bath, steady-state, transport and Green-function modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    /// The rate graph splits into uncoupled parts.
    #[error("reducible rate graph: {0}")]
    Structural(String),

    #[error("stationary state is not unique: {0}")]
    Degeneracy(String),

    /// Couplings the linear-response treatment cannot handle (near-diagonal kernels, vanishing sums).
    #[error("pathological coupling: {0}")]
    PathologicalCoupling(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Config(_) | Error::Dimension { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
