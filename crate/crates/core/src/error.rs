use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("year {year} outside graph range {range}")]
    Range { year: i32, range: String },

    #[error("unknown {kind} {id}")]
    Lookup { kind: &'static str, id: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("hindsight data unavailable: graph has no papers in year {0}")]
    HindsightUnavailable(i32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("identification error: {0}")]
    Identification(String),

    /// `status` holds one line per cell: generator, hypothesis and outcome.
    #[error("recognition grid failed: {failed} of {total} cells failed")]
    Grid {
        failed: usize,
        total: usize,
        status: Vec<String>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
