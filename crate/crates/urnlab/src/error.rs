use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model spec error: {0}")]
    ModelSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("urn error: {0}")]
    Urn(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("measure error: {0}")]
    Measure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
