use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{failed} of {total} drops failed")]
    DropFailures { failed: usize, total: usize },
    #[error("{0} validation checks failed")]
    ValidationFailed(usize),
    #[error(transparent)]
    Core(#[from] cellfree::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
