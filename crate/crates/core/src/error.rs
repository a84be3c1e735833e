use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("header is missing required column `{0}`")]
    MissingColumn(&'static str),

    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("event queue is full (capacity {capacity})")]
    QueueFull { capacity: usize },

    #[error("event queue is closed")]
    QueueClosed,

    #[error("non-finite value {0} passed to drift detector")]
    NonFinite(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
