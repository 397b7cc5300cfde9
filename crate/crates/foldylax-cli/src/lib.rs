//! Batch front end: scene configs in, CSV and JSON artifacts out.

pub mod commands;
pub mod config;
pub mod water;

pub use config::SceneConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or incomplete configuration, exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A numerical check failed or a run was rejected, exit code 1.
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.into())
    }
}
