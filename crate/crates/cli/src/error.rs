use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] sppdon::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 usage or configuration error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Json(_) | CliError::Csv(_) => 2,
            CliError::Core(sppdon::Error::Io(e)) | CliError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
            CliError::Core(e) if e.is_usage() => 2,
            _ => 1,
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
