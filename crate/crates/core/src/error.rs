use std::path::PathBuf;

/// Errors produced anywhere in the engine, pipeline or training code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("empty sequence: {0}")]
    EmptySequence(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("labeling error: unknown location category {0:?}")]
    UnknownCategory(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
