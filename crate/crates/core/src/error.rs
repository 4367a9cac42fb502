use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::{DenseMatrix, Precision};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precision mismatch: {left:?} combined with {right:?}")]
    PrecisionMismatch { left: Precision, right: Precision },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("iteration diverged (best residual {residual:e})")]
    Divergence {
        residual: f64,
        best: Box<DenseMatrix>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Failures caused by floating-point behaviour rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NoConvergence { .. }
                | Error::Divergence { .. }
                | Error::Domain(_)
                | Error::Singular(_)
        )
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
