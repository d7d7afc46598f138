use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape in {op}: {lhs:?} vs {rhs:?}")]
    InvalidShape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric failure: {message}{}", coordinate.map(|c| format!(" (coordinate {c})")).unwrap_or_default())]
    Numeric {
        message: String,
        coordinate: Option<usize>,
    },
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("singular parameter: {0}")]
    SingularParameter(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("maximum-likelihood estimate undefined: {0}")]
    UndefinedMle(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::InvalidShape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
