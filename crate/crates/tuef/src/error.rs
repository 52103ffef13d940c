//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unreadable input file {path}: {message}")]
    UnreadableFile { path: String, message: String },

    #[error("no candidate experts at beta={beta}; retry with a smaller beta")]
    EmptyCandidates { beta: u64 },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("feature arity mismatch: model expects {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("evaluation input invalid: {0}")]
    InvalidRun(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in. Prior artifacts
    /// stay on disk; the failing stage is named in the message.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
