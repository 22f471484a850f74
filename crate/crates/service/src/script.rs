//! Scripted reviewer sessions that drive the HTTP router in-process.
//!
//! A session is a seeded list of operations: model registrations, content
//! posts, view batches, job fetches, labels, refreshes and clock moves. The
//! [`Driver`] plays them against a router and remembers, like a client
//! would, which job each reviewer holds, so a session can continue against a
//! recovered process after a crash.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sevbandit_core::{ContentId, Hours, ModelId};
use tower::ServiceExt;

use crate::engine::EngineConfig;
use crate::http::{router, AppState};
use crate::node::{IngestRequest, ManualClock, Node, NodeConfig, RegisterModelRequest, ViewEvent};
use crate::persist::LOG_FILE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptOp {
    Advance { hours: Hours },
    Register(RegisterModelRequest),
    Ingest(IngestRequest),
    Views { events: Vec<ViewEvent> },
    NextJob { reviewer_id: String },
    /// Labels the job `reviewer_id` holds; a no-op when it holds none.
    Label { reviewer_id: String, severity: f64 },
    Refresh,
}

const MODELS: [&str; 3] = ["text", "image", "reports"];
const REVIEWERS: [&str; 3] = ["r1", "r2", "r3"];

/// A reproducible session of `len` operations after three registrations.
pub fn random_session(seed: u64, len: usize) -> Vec<ScriptOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops: Vec<ScriptOp> = MODELS
        .iter()
        .map(|m| {
            let warmup: Vec<f64> = (0..400).map(|_| rng.random::<f64>().powi(2)).collect();
            ScriptOp::Register(RegisterModelRequest::with_warmup(*m, warmup))
        })
        .collect();
    ops.push(ScriptOp::Refresh);
    let mut posted = 0usize;
    for _ in 0..len {
        let u: f64 = rng.random();
        let op = if u < 0.35 {
            let mut scores = BTreeMap::new();
            for m in MODELS {
                if rng.random::<f64>() < 0.8 {
                    scores.insert(ModelId::new(m), rng.random::<f64>());
                }
            }
            if rng.random::<f64>() < 0.05 {
                scores.insert(ModelId::new("unregistered"), 0.9);
            }
            posted += 1;
            ScriptOp::Ingest(IngestRequest {
                content_id: ContentId::new(format!("c{posted:05}")),
                scores,
                views: Vec::new(),
            })
        } else if u < 0.45 && posted > 0 {
            let events = (0..rng.random_range(1..4))
                .map(|_| ViewEvent {
                    content_id: ContentId::new(format!("c{:05}", rng.random_range(1..=posted + 2))),
                    times: Vec::new(),
                })
                .collect();
            ScriptOp::Views { events }
        } else if u < 0.65 {
            ScriptOp::NextJob {
                reviewer_id: REVIEWERS[rng.random_range(0..REVIEWERS.len())].into(),
            }
        } else if u < 0.85 {
            let severity = if rng.random::<f64>() < 0.5 {
                0.0
            } else {
                rng.random_range(1..=5) as f64
            };
            ScriptOp::Label {
                reviewer_id: REVIEWERS[rng.random_range(0..REVIEWERS.len())].into(),
                severity,
            }
        } else if u < 0.92 {
            ScriptOp::Refresh
        } else {
            ScriptOp::Advance {
                hours: rng.random_range(0.01..0.2),
            }
        };
        ops.push(op);
    }
    ops
}

/// Plays scripted operations against a router.
pub struct Driver {
    app: Router,
    clock: ManualClock,
    held: BTreeMap<String, ContentId>,
    /// Every successful dispatch, in order.
    pub dispatched: Vec<(String, ContentId)>,
}

impl Driver {
    pub fn new(app: Router, clock: ManualClock) -> Self {
        Self {
            app,
            clock,
            held: BTreeMap::new(),
            dispatched: Vec::new(),
        }
    }

    /// Points the driver at a new router (after a restart), keeping what
    /// reviewers hold.
    pub fn reconnect(&mut self, app: Router) {
        self.app = app;
    }

    pub async fn send(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        self.send_text(method, uri, body.map(|b| b.to_string())).await
    }

    /// Sends a raw body (as `application/json`) and parses the reply.
    pub async fn send_text(&self, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .expect("valid request");
        let resp = self.app.clone().oneshot(req).await.expect("router is infallible");
        let status = resp.status();
        let bytes = resp.into_body().collect().await.expect("body").to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> Value {
        let (status, v) = self.send(Method::GET, uri, None).await;
        assert!(status.is_success(), "GET {uri}: {status} {v}");
        v
    }

    /// Plays `op`; returns the status of the request it made, if any.
    pub async fn run(&mut self, op: &ScriptOp) -> Option<StatusCode> {
        let (status, body) = match op {
            ScriptOp::Advance { hours } => {
                self.clock.advance(*hours);
                return None;
            }
            ScriptOp::Register(req) => self.send(Method::POST, "/models", json(req)).await,
            ScriptOp::Ingest(req) => self.send(Method::POST, "/content", json(req)).await,
            ScriptOp::Views { events } => self.send(Method::POST, "/views", json(events)).await,
            ScriptOp::Refresh => self.send(Method::POST, "/snapshot", None).await,
            ScriptOp::NextJob { reviewer_id } => {
                if self.held.contains_key(reviewer_id) {
                    return None;
                }
                let r = self
                    .send(Method::GET, &format!("/next-job?reviewer_id={reviewer_id}"), None)
                    .await;
                if let Some(id) = r.1["job"]["content_id"].as_str() {
                    let id = ContentId::new(id);
                    self.held.insert(reviewer_id.clone(), id.clone());
                    self.dispatched.push((reviewer_id.clone(), id));
                }
                r
            }
            ScriptOp::Label { reviewer_id, severity } => {
                let Some(id) = self.held.remove(reviewer_id) else {
                    return None;
                };
                let body = serde_json::json!({
                    "content_id": id,
                    "severity": severity,
                    "reviewer_id": reviewer_id,
                });
                self.send(Method::POST, "/label", Some(body)).await
            }
        };
        assert!(status.is_success(), "{op:?}: {status} {body}");
        Some(status)
    }
}

/// What a session leaves behind, for comparing runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    /// `GET /state` after a final refresh.
    pub state: Value,
    pub metrics: Value,
    /// Every dispatch the reviewers received, in order.
    pub dispatched: Vec<(String, ContentId)>,
    /// Pending content in dispatch order.
    pub pending: Vec<ContentId>,
    /// `GET /state` just before each op index listed in `observe` (after
    /// the restart, when that index is also a kill point).
    pub observed: Vec<Value>,
    pub restarts: usize,
}

/// Plays `session` against a node persisting to `dir`, killing the process
/// (dropping it without any shutdown work) before each op index in `kills`
/// and restarting from disk. With `tear_tail`, every kill also leaves half a
/// record at the end of the log, as a crash mid-write would.
pub async fn run_with_crashes(
    session: &[ScriptOp],
    dir: &Path,
    checkpoint_every: u64,
    kills: &[usize],
    tear_tail: bool,
    observe: &[usize],
) -> crate::Result<SessionOutcome> {
    let clock = ManualClock::new(0.0);
    let config = NodeConfig {
        engine: EngineConfig::default(),
        data_dir: Some(dir.to_path_buf()),
        fsync: false,
        checkpoint_every,
    };
    let open = |clock: &ManualClock| -> crate::Result<AppState> {
        Ok(AppState::new(Node::open(&config, Arc::new(clock.clone()))?))
    };
    let mut state = open(&clock)?;
    let mut driver = Driver::new(router(state.clone()), clock.clone());
    let mut restarts = 0;
    let mut observed = Vec::new();
    for (i, op) in session.iter().enumerate() {
        if kills.contains(&i) {
            driver.reconnect(Router::new());
            drop(state);
            if tear_tail {
                let mut log = OpenOptions::new().append(true).open(dir.join(LOG_FILE))?;
                log.write_all(br#"{"seq":999999,"ts":0.0,"kind":"snap"#)?;
            }
            state = open(&clock)?;
            driver.reconnect(router(state.clone()));
            restarts += 1;
        }
        if observe.contains(&i) {
            observed.push(driver.get("/state").await);
        }
        driver.run(op).await;
    }
    driver.send(Method::POST, "/snapshot", None).await;
    let pending = state.node().engine().pool().ordered().map(|e| e.content.content_id.clone()).collect();
    Ok(SessionOutcome {
        state: driver.get("/state").await,
        metrics: driver.get("/metrics").await,
        dispatched: driver.dispatched,
        pending,
        observed,
        restarts,
    })
}

fn json<T: Serialize>(v: &T) -> Option<Value> {
    Some(serde_json::to_value(v).expect("request types serialize"))
}
