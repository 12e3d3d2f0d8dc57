use std::path::Path;

use serde::Serialize;
use thiserror::Error;
use vqa_core::balance::BalanceError;
use vqa_core::corpus::CorpusError;
use vqa_core::generation::GenerationError;
use vqa_core::jsonl::JsonlError;
use vqa_core::validation::ValidationError;

use crate::run::Stage;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{stage} requires stage {requires} to be completed first")]
    StageOrder { stage: String, requires: Stage },
    #[error("stage {0} is already completed for this run")]
    StageCompleted(Stage),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("stage {stage} stopped early: {message}")]
    Incomplete { stage: Stage, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::StageOrder { .. } => "stage_order",
            ServiceError::StageCompleted(_) => "stage_completed",
            ServiceError::Config(_) => "config",
            ServiceError::Input(_) => "input",
            ServiceError::Incomplete { .. } => "incomplete",
            ServiceError::Io { .. } | ServiceError::Jsonl(_) => "io",
            ServiceError::Corpus(_) => "corpus",
            ServiceError::Generation(_) => "generation",
            ServiceError::Validation(_) => "validation",
            ServiceError::Balance(_) => "balance",
            ServiceError::Json(_) => "json",
        }
    }

    pub fn envelope(&self) -> ErrorEnvelope {
        ErrorEnvelope {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable error body, shared by the CLI and the HTTP API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorEnvelope {
    pub code: String,
    pub message: String,
}
