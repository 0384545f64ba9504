use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("problem too large: {unknowns} unknowns exceeds limit of {limit}")]
    TooLarge { unknowns: usize, limit: usize },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// True for failures caused by bad inputs or configuration rather than
    /// by the numerics.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::TooLarge { .. } | Error::Format { .. } => true,
            Error::Json(_) => true,
            Error::Sample { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
