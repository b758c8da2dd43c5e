use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] srcid::Error),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for invalid configuration, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_config() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
