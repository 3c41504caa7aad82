//! Error type shared across the pipeline.

use std::path::PathBuf;

/// Pipeline error. Variants map onto the CLI exit codes: config errors
/// exit 2, data errors (parse/io) exit 3, numerical errors exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data: {0}")]
    Data(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("information barrier violated: {0}")]
    InformationLeak(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 3,
            Error::Numerical(_) | Error::InformationLeak(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
