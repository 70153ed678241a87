use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("vacuum reached: {0}")]
    Vacuum(String),
    #[error("step size error: {0}")]
    Step(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("fit rejected: {0}")]
    Fit(String),
    #[error("study failed after {completed} runs: {message}")]
    Study { completed: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
