//! HTTP+JSON surface.
//!
//! All mutations go through one [`Node`] behind a mutex, so dispatch and
//! label application are serialized. `GET /state` reads the published
//! snapshot from its own lock and never waits on the writer.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use sevbandit_core::ParameterSnapshot;
use std::collections::BTreeMap;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tracing::{error, info};

use crate::config::ServiceConfig;
use crate::engine::ReplayRecord;
use crate::engine::Applied;
use crate::error::{EngineError, Result, ServiceError};
use crate::node::{
    Clock, IngestRequest, IngestResponse, JobResponse, LabelRequest, LabelResponse, Node, RegisterModelRequest,
    RegisterModelResponse, ReplayResponse, SnapshotResponse, ViewEvent, ViewsResponse,
};

#[derive(Clone)]
pub struct AppState {
    node: Arc<Mutex<Node>>,
    published: Arc<RwLock<Arc<ParameterSnapshot>>>,
}

impl AppState {
    pub fn new(node: Node) -> Self {
        let published = node.engine().snapshot().clone();
        Self {
            node: Arc::new(Mutex::new(node)),
            published: Arc::new(RwLock::new(published)),
        }
    }

    /// Exclusive access to the writer.
    pub fn node(&self) -> MutexGuard<'_, Node> {
        self.node.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The snapshot scoring currently uses.
    pub fn published(&self) -> Arc<ParameterSnapshot> {
        self.published.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn write<T>(&self, op: impl FnOnce(&mut Node) -> Result<T>) -> Result<T, ApiError> {
        let mut node = self.node();
        let out = op(&mut node);
        let current = node.engine().snapshot();
        if self.published().snapshot_id != current.snapshot_id {
            *self.published.write().unwrap_or_else(|p| p.into_inner()) = current.clone();
        }
        out.map_err(ApiError)
    }
}

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::Engine(e) => match e {
                EngineError::UnknownContent(_) => StatusCode::NOT_FOUND,
                EngineError::NotUnderReview { .. }
                | EngineError::WrongReviewer { .. }
                | EngineError::DuplicateModel(_)
                | EngineError::SequenceGap { .. }
                | EngineError::ClockRegression { .. }
                | EngineError::DispatchMismatch { .. } => StatusCode::CONFLICT,
                EngineError::BadRequest(_) | EngineError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            },
            ServiceError::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            error!(error = %self.0, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct NextJobQuery {
    reviewer_id: String,
}

async fn post_content(State(s): State<AppState>, Json(req): Json<IngestRequest>) -> Result<Json<IngestResponse>, ApiError> {
    s.write(|n| n.ingest(req)).map(Json)
}

async fn next_job(State(s): State<AppState>, Query(q): Query<NextJobQuery>) -> Result<Json<JobResponse>, ApiError> {
    s.write(|n| n.next_job(&q.reviewer_id)).map(Json)
}

async fn post_label(State(s): State<AppState>, Json(req): Json<LabelRequest>) -> Result<Json<LabelResponse>, ApiError> {
    s.write(|n| n.label(req)).map(Json)
}

async fn post_model(
    State(s): State<AppState>,
    Json(req): Json<RegisterModelRequest>,
) -> Result<Json<RegisterModelResponse>, ApiError> {
    s.write(|n| n.register_model(req)).map(Json)
}

/// Accepts a JSON array of view events, a single event, or JSON lines.
fn parse_views(body: &str) -> Result<Vec<ViewEvent>, ApiError> {
    let trimmed = body.trim();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| ApiError(e.into()));
    }
    trimmed
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ApiError(e.into())))
        .collect()
}

async fn post_views(State(s): State<AppState>, body: String) -> Result<Json<ViewsResponse>, ApiError> {
    let events = parse_views(&body)?;
    s.write(|n| n.record_views(events)).map(Json)
}

async fn post_snapshot(State(s): State<AppState>) -> Result<Json<SnapshotResponse>, ApiError> {
    s.write(|n| n.refresh()).map(Json)
}

async fn post_replay(State(s): State<AppState>, Json(record): Json<ReplayRecord>) -> Result<Json<ReplayResponse>, ApiError> {
    let seq = record.seq;
    let applied = s.write(|n| n.submit(record))?;
    Ok(Json(ReplayResponse {
        seq,
        already_applied: applied == Applied::AlreadyApplied,
    }))
}

async fn get_state(State(s): State<AppState>) -> Json<Arc<ParameterSnapshot>> {
    Json(s.published())
}

async fn get_metrics(State(s): State<AppState>) -> Json<BTreeMap<String, f64>> {
    Json(s.node().engine().metrics())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/content", post(post_content))
        .route("/next-job", get(next_job))
        .route("/label", post(post_label))
        .route("/models", post(post_model))
        .route("/views", post(post_views))
        .route("/snapshot", post(post_snapshot))
        .route("/replay", post(post_replay))
        .route("/state", get(get_state))
        .route("/metrics", get(get_metrics))
        .with_state(state)
}

/// A service started on the current runtime.
pub struct RunningService {
    pub addr: SocketAddr,
    pub state: AppState,
    server: JoinHandle<()>,
    timer: Option<JoinHandle<()>>,
}

impl RunningService {
    /// Stops serving without any shutdown work, as a crash would.
    pub fn kill(self) {
        self.server.abort();
        if let Some(t) = self.timer {
            t.abort();
        }
    }

    /// Writes a checkpoint, then stops.
    pub fn shutdown(self) -> Result<()> {
        let out = self.state.node().checkpoint();
        self.kill();
        out
    }

    /// Waits until the server task ends.
    pub async fn wait(self) {
        let _ = self.server.await;
    }
}

/// Recovers state, binds, and starts serving (and the refresh timer when
/// enabled). Port 0 picks a free port.
pub async fn start(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<RunningService> {
    config.validate()?;
    let node = Node::open(&config.node_config(), clock)?;
    let state = AppState::new(node);
    let listener = TcpListener::bind(config.addr()).await?;
    let addr = listener.local_addr()?;
    let app = router(state.clone());
    let server = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            error!(error = %e, "server stopped");
        }
    });
    let timer = config.refresh_timer.then(|| {
        let state = state.clone();
        let period = Duration::from_secs_f64(config.engine.bandit.refresh_interval_hours() * 3600.0);
        tokio::spawn(async move {
            let mut ticks = tokio::time::interval(period);
            ticks.tick().await;
            loop {
                ticks.tick().await;
                if let Err(e) = state.write(|n| n.refresh()) {
                    error!(error = %e.0, "snapshot refresh failed");
                }
            }
        })
    });
    info!(%addr, "serving");
    Ok(RunningService {
        addr,
        state,
        server,
        timer,
    })
}
