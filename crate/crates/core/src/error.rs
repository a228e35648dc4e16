use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A treatment/fold cell is too small to support a fit.
    #[error("insufficient cell: {0}")]
    Cell(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    /// Follower and non-follower propensity ranges do not overlap.
    #[error("overlap violation: {0}")]
    Overlap(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Argument(_) => "argument",
            Error::Numerical(_) => "numerical",
            Error::Cell(_) => "cell",
            Error::EmptyGroup(_) => "empty_group",
            Error::Overlap(_) => "overlap",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
