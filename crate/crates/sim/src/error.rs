use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] sevbandit_core::Error),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("comparison needs at least 2 seeds, got {0}")]
    TooFewSeeds(usize),

    #[error("baseline policy realized no integrity value; lift is undefined")]
    ZeroBaseline,

    #[error("tuning grid axis `{0}` is empty")]
    EmptyGrid(&'static str),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidScenario(msg.into())
}
