use std::path::PathBuf;

use sevbandit_core::{ContentId, Hours, Lifecycle, ModelId};
use thiserror::Error;

/// Rejections from applying a record to the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Core(#[from] sevbandit_core::Error),

    #[error("sequence gap: expected record {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },

    #[error("record {seq} at t={ts} precedes engine clock {clock}")]
    ClockRegression { seq: u64, ts: Hours, clock: Hours },

    #[error("unknown content `{0}`")]
    UnknownContent(ContentId),

    #[error("content `{id}` is {state:?}, not under review")]
    NotUnderReview { id: ContentId, state: Lifecycle },

    #[error("content `{id}` is held by reviewer `{holder}`")]
    WrongReviewer { id: ContentId, holder: String },

    #[error("model `{0}` is already registered")]
    DuplicateModel(ModelId),

    #[error("record {seq} dispatched `{logged}` but the pool head is {head:?}")]
    DispatchMismatch {
        seq: u64,
        logged: ContentId,
        head: Option<ContentId>,
    },

    #[error("bad request: {0}")]
    BadRequest(String),
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error("replay log {path}: record on line {line} (expected sequence {expected_seq}) is unreadable: {reason}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        expected_seq: u64,
        reason: String,
    },

    #[error("checkpoint {path} has format version {found}, expected {expected}")]
    CheckpointVersion { path: PathBuf, found: u32, expected: u32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<sevbandit_core::Error> for ServiceError {
    fn from(e: sevbandit_core::Error) -> Self {
        ServiceError::Engine(e.into())
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
