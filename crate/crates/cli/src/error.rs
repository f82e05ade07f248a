use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("run failed for {row}: {source}")]
    Run {
        row: String,
        #[source]
        source: dpglm::Error,
    },
    #[error(transparent)]
    Core(#[from] dpglm::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
