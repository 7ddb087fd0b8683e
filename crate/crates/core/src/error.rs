use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a precondition (shapes, counts, ranges).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A factorization or solve could not produce a finite, accurate answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An explicit dense construction would exceed its configured size cap.
    #[error(
        "complexity limit: {what} needs {required} (cap {cap}); the Kronecker system is \
         (d_m*d_k)^2 dense and its direct solve costs O(d^6), use the gradient solver instead"
    )]
    ComplexityLimit {
        what: &'static str,
        required: usize,
        cap: usize,
    },

    #[error("malformed matrix file at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::ComplexityLimit { .. })
    }
}
