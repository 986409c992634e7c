use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Solver(#[from] lqr::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
