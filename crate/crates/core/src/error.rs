use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the training library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("labels are not a {{+1, -1}} encoding (found {found:?}); supply a positive-class mapping")]
    LabelSet { found: Vec<String> },

    #[error("dataset needs at least one example of each class (positives: {positives}, negatives: {negatives})")]
    MissingClass { positives: usize, negatives: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("example {0} is already a basis function")]
    DuplicateBasis(usize),

    #[error("kernel cache is full ({capacity} columns)")]
    CacheFull { capacity: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model file error: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
