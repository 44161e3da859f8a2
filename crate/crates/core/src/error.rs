use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate annotation for feature {feature} and language {language}")]
    DuplicateAnnotation { feature: String, language: String },

    #[error("requested {requested} sentences for {language} but only {available} are available")]
    NotEnoughSentences {
        language: String,
        requested: usize,
        available: usize,
    },

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("missing corpus for language {0}")]
    MissingCorpus(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid embedding file: {0}")]
    InvalidFormat(String),

    #[error("layer {0} is not present in the embedding file")]
    AbsentLayer(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("inconsistent reports: {0}")]
    InconsistentReports(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Whether the error was caused by bad input rather than a fault in the tool.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Json(_))
    }
}
