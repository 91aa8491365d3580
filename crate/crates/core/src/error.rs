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
        line: usize,
        message: String,
    },

    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),

    #[error("duplicate query_id {0}")]
    DuplicateQueryId(String),

    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,

    #[error("unknown doc_id {0}")]
    UnknownDocId(String),

    #[error("session for query {0} already opened in this run")]
    SessionAlreadyOpen(String),

    #[error("session for query {0} is closed")]
    SessionClosed(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("llm transport failure after {attempts} attempt(s): {message}")]
    LlmTransport { attempts: u32, message: String },

    #[error("retriever failure: {0}")]
    Retriever(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
