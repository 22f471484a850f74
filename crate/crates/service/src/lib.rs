//! Long-running review-dispatch service.
//!
//! Content is ingested and scored against the published coefficient
//! snapshot, handed to reviewers in priority order, and labels flow back
//! into the bandit. Every state change is a sequenced record in an
//! append-only JSONL log; together with periodic checkpoints the log lets a
//! restarted process rebuild exactly the coefficients and pool ordering it
//! had before it died.
//!
//! Endpoints: `POST /content`, `GET /next-job?reviewer_id=`, `POST /label`,
//! `POST /models`, `POST /views`, `POST /snapshot`, `POST /replay`,
//! `GET /state`, `GET /metrics`.

pub mod config;
pub mod engine;
mod error;
pub mod http;
pub mod node;
pub mod persist;
pub mod script;

pub use config::ServiceConfig;
pub use engine::{Applied, Engine, EngineConfig, JobPayload, ModelLine, RecordBody, ReplayRecord};
pub use error::{EngineError, Result, ServiceError};
pub use http::{router, start, AppState, RunningService};
pub use node::{Clock, ManualClock, Node, NodeConfig, SystemClock};
pub use persist::recover;
