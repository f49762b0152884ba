use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] infosphere_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("unknown artifact type: {0}")]
    UnknownArtifact(PathBuf),
}

/// Process exit codes. Stable: scripts depend on them.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const HINDSIGHT: u8 = 4;
    pub const MISSING_CHECKPOINT: u8 = 5;
    pub const GRID: u8 = 6;
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use infosphere_core::Error as E;
        match self {
            CliError::Config(_) | CliError::UnknownArtifact(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::MissingCheckpoint(_) => exit::MISSING_CHECKPOINT,
            CliError::Core(e) => match e {
                E::Config(_) | E::Shape(_) | E::Range { .. } => exit::CONFIG,
                E::Io { .. } | E::Parse { .. } | E::Integrity(_) | E::Lookup { .. } => exit::IO,
                E::HindsightUnavailable(_) => exit::HINDSIGHT,
                E::Grid { .. } => exit::GRID,
                E::Domain(_) | E::Training(_) | E::Identification(_) => exit::FAILURE,
            },
        }
    }

    /// Extra lines worth showing after the headline message.
    pub fn details(&self) -> &[String] {
        match self {
            CliError::Core(infosphere_core::Error::Grid { status, .. }) => status,
            _ => &[],
        }
    }
}
