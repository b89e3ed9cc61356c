use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("foreground mask is empty")]
    EmptyForeground,
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("malformed mesh: {0}")]
    MalformedMesh(String),
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("no in-range answer in {0:?}")]
    Unparseable(String),
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("override index {index} out of range 1..={count}")]
    InvalidOverride { index: usize, count: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cache i/o at {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run manifest corrupt: {0}")]
    ManifestCorrupt(String),
    #[error("run mismatch: directory holds run {existing}, configuration yields {requested}")]
    RunMismatch { existing: String, requested: String },
    #[error("dataset manifest invalid: {}", .0.join("; "))]
    ManifestInvalid(Vec<String>),
    #[error("run interrupted after stage {0}")]
    Interrupted(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ (Error::Stage { .. } | Error::Interrupted(_)) => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
