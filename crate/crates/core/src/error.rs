use thiserror::Error;

use crate::ObjectId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("histogram distance supports at most 3 dimensions, got {0}")]
    UnsupportedDimension(usize),

    #[error("object {0} has no neighbors in the similarity graph")]
    NoNeighbors(ObjectId),

    #[error("object {0} not found")]
    NotFound(ObjectId),

    #[error("unsupported transfer: {0}")]
    UnsupportedTransfer(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by malformed user input rather than internal failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::UnsupportedDimension(_)
                | Error::UnsupportedTransfer(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Schema { .. }
                | Error::Io { .. }
        )
    }
}
