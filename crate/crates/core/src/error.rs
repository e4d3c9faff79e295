use serde::Serialize;
use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("retry budget exhausted: {0}")]
    RetryExhausted(String),
    #[error("weight error: {0}")]
    Weight(String),
    #[error("labelling error: {0}")]
    Labelling(String),
    #[error("step failure: {0}")]
    Step(String),
    #[error("embedding failure at vertex {vertex}: {reason}")]
    Embedding {
        vertex: usize,
        live_candidates: Vec<usize>,
        reason: String,
    },
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Wraps an error with the pipeline stage it escaped from.
    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage: stage.to_string(),
                message: other.to_string(),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
