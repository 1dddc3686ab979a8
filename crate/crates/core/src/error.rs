use std::path::PathBuf;

/// Errors raised anywhere in the simulator or the moment engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("grid mismatch: expected {expected} points per axis, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("source at ({x:.4}, {y:.4}) lies outside the central half of the grid")]
    SourceOutsideSafeRegion { x: f64, y: f64 },

    #[error("quadrature did not converge: value {value:e}, estimated error {error:e} after {intervals} intervals")]
    Quadrature {
        value: f64,
        error: f64,
        intervals: usize,
    },

    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("missing config key `{0}`")]
    MissingKey(&'static str),

    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("bad binary dump {path}: {reason}")]
    BadDump { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
