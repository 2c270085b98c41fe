use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: column `{0}`")]
    Schema(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {}", .0.join(", "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] locequate::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
