use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] auxbound::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 config, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use auxbound::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidConfig(_) | E::InvalidInput(_) | E::Unsupported(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
