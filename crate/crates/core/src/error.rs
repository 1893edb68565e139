use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite value or failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A Cholesky pivot was not strictly positive.
    #[error("rank deficiency: pivot {pivot} of the normal equations is {value:e}")]
    RankDeficient { pivot: usize, value: f64 },

    /// The relative error exceeded the divergence guard.
    #[error("divergence at iteration {iter}: relative error {rel_error:e} exceeds guard")]
    Divergence {
        iter: usize,
        rel_error: f64,
        /// Relative errors recorded up to the failure.
        trace: Vec<f64>,
    },

    /// A CSV cell could not be parsed (1-based row and column).
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    /// Malformed instance container.
    #[error("invalid instance file: {0}")]
    Format(String),

    /// Too many trials failed in an experiment.
    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
