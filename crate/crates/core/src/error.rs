use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("required artifact not found: {0}")]
    MissingArtifact(PathBuf),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error("data contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cell {0} selects no rows")]
    EmptyCell(String),

    #[error("dimension mismatch: model expects {expected} columns, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what: what.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code: 1 usage, 2 data contract violation, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::MissingArtifact(_)
            | Error::Malformed { .. }
            | Error::Contract(_)
            | Error::EmptyCell(_)
            | Error::Dimension { .. }
            | Error::Undefined(_)
            | Error::Csv { .. } => 2,
            Error::Io { .. } | Error::Json(_) => 3,
        }
    }
}
