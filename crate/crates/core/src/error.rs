use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the range an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested threshold diverges (contaminated success underflowed to zero).
    #[error("unbounded result: {0}")]
    Unbounded(String),

    /// The quantity has no value for these inputs (e.g. a zero exponent denominator).
    #[error("undefined result: {0}")]
    Undefined(String),

    /// The two hypotheses coincide, so no distinguishing bound exists.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cannot invert pass@k curve: {0}")]
    Inversion(String),

    #[error("retry mode error: {0}")]
    Mode(String),

    #[error("parse error in {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
