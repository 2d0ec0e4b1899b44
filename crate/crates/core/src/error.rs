use thiserror::Error;

/// Errors produced by fitting, estimation, data loading and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged: non-finite loss in epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error at data row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("validation error in column {column}: {message}")]
    ColumnValidation { column: String, message: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input (as opposed to runtime failures).
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InvalidInput(_) | Error::Schema(_) | Error::Validation { .. }
            | Error::ColumnValidation { .. } => true,
            Error::Replication { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
