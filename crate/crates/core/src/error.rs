use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CaretsError>;

#[derive(Debug, Error)]
pub enum CaretsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: expected timestamp {expected}, found {found}")]
    Continuity {
        row: usize,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("series too short: {len} points, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite {term} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<CaretsError>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl CaretsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CaretsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            CaretsError::Config(_) | CaretsError::Checkpoint(_) => 1,
            CaretsError::Io { .. }
            | CaretsError::Parse { .. }
            | CaretsError::Continuity { .. }
            | CaretsError::NonFinite(_)
            | CaretsError::TooShort { .. }
            | CaretsError::Empty(_) => 2,
            CaretsError::Dimension(_) | CaretsError::NonFiniteLoss { .. } => 3,
            CaretsError::Fold { source, .. } => match source.exit_code() {
                2 => 2,
                _ => 3,
            },
        }
    }
}
