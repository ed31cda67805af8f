use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band spec: {0}")]
    InvalidSpec(String),

    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("ingestion error: missing `{0}`")]
    Ingestion(String),

    #[error("cache hash mismatch in {dir}: expected {expected}, found {found}")]
    CacheMismatch {
        dir: PathBuf,
        expected: String,
        found: String,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("tiling plan error: {0}")]
    Tiling(String),

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("hdf5: {0}")]
    Hdf5(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<hdf5_metno::Error> for Error {
    fn from(e: hdf5_metno::Error) -> Self {
        Error::Hdf5(e.to_string())
    }
}
