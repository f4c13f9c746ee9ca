use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {}: run `bnfuse train` first", .0.display())]
    MissingArtifact(PathBuf),

    #[error("artifact {} was produced by a different configuration", .0.display())]
    StaleArtifact(PathBuf),

    #[error(transparent)]
    Core(#[from] bnfuse::Error),
}

impl CliError {
    /// 2 for configuration problems, 4 for numeric failures, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::StaleArtifact(_) => 2,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(
                bnfuse::Error::InvalidConfig(_) | bnfuse::Error::InvalidChannelParams(_),
            ) => 2,
            CliError::Core(_) | CliError::MissingArtifact(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
