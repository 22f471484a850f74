//! The single writer: turns requests into sequenced records, logs them, and
//! applies them to the engine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sevbandit_core::{
    fit_bins, fit_training_bins, Attribution, BinLayout, ContentId, Hours, ModelId, OptimisticPrior, RiskModelDescriptor,
};
use tracing::info;

use crate::engine::{Applied, Engine, EngineConfig, JobPayload, RecordBody, ReplayRecord};
use crate::error::{EngineError, Result};
use crate::persist::{self, ReplayLog, CHECKPOINT_FILE, LOG_FILE};

/// Source of engine time.
pub trait Clock: Send + Sync {
    /// Hours elapsed since `epoch_unix_ms`.
    fn now_hours(&self, epoch_unix_ms: u64) -> Hours;
}

/// Wall clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

pub fn unix_ms_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Clock for SystemClock {
    fn now_hours(&self, epoch_unix_ms: u64) -> Hours {
        unix_ms_now().saturating_sub(epoch_unix_ms) as f64 / 3_600_000.0
    }
}

/// Clock moved by hand; for tests and scripted sessions.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<Mutex<Hours>>);

impl ManualClock {
    pub fn new(t: Hours) -> Self {
        Self(Arc::new(Mutex::new(t)))
    }

    pub fn set(&self, t: Hours) {
        *self.0.lock().expect("clock lock") = t;
    }

    pub fn advance(&self, dt: Hours) {
        *self.0.lock().expect("clock lock") += dt;
    }
}

impl Clock for ManualClock {
    fn now_hours(&self, _epoch_unix_ms: u64) -> Hours {
        *self.0.lock().expect("clock lock")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub content_id: ContentId,
    #[serde(default)]
    pub scores: BTreeMap<ModelId, f64>,
    /// Views already observed, engine hours.
    #[serde(default)]
    pub views: Vec<Hours>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub content_id: ContentId,
    /// True when the id was already known; nothing changed.
    pub duplicate: bool,
    pub optimistic_severity: f64,
    pub priority: f64,
    pub attribution: Option<Attribution>,
    pub skipped_models: Vec<ModelId>,
    pub snapshot_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub content_id: ContentId,
    pub severity: f64,
    pub reviewer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRef {
    pub model_id: ModelId,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub content_id: ContentId,
    pub removed: bool,
    pub realized_iv: f64,
    pub updated_cells: Vec<CellRef>,
    /// First snapshot whose coefficients include this label.
    pub visible_from_snapshot: u64,
}

/// Registers a model from explicit bin edges, or from warm-up scores that
/// the bins are fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterModelRequest {
    pub model_id: ModelId,
    #[serde(default)]
    pub display_name: Option<String>,
    #[serde(default)]
    pub bin_edges: Option<Vec<f64>>,
    #[serde(default)]
    pub warmup_scores: Option<Vec<f64>>,
    /// Number of bins when fitting; defaults to the engine setting.
    #[serde(default)]
    pub bins: Option<usize>,
    /// Fit on the top fraction of warm-up scores; defaults to the engine
    /// setting. Use 1 to fit on every score.
    #[serde(default)]
    pub alpha_quantile: Option<f64>,
    #[serde(default)]
    pub prior: Option<OptimisticPrior>,
}

impl RegisterModelRequest {
    pub fn with_edges(model_id: impl Into<ModelId>, edges: Vec<f64>) -> Self {
        Self {
            bin_edges: Some(edges),
            ..Self::bare(model_id.into())
        }
    }

    pub fn with_warmup(model_id: impl Into<ModelId>, scores: Vec<f64>) -> Self {
        Self {
            warmup_scores: Some(scores),
            ..Self::bare(model_id.into())
        }
    }

    fn bare(model_id: ModelId) -> Self {
        Self {
            model_id,
            display_name: None,
            bin_edges: None,
            warmup_scores: None,
            bins: None,
            alpha_quantile: None,
            prior: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterModelResponse {
    pub model_id: ModelId,
    pub registry_version: u64,
    pub bin_edges: Vec<f64>,
    pub visible_from_snapshot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEvent {
    pub content_id: ContentId,
    /// View times; a single view at the current time when empty.
    #[serde(default)]
    pub times: Vec<Hours>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewsResponse {
    pub recorded: usize,
    pub repriced: usize,
    pub unknown: Vec<ContentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotResponse {
    pub snapshot_id: u64,
    pub expired: usize,
    pub evicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResponse {
    /// `None` when the pool is empty.
    pub job: Option<JobPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResponse {
    pub seq: u64,
    pub already_applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub engine: EngineConfig,
    /// Where the replay log and checkpoint live; `None` keeps everything in
    /// memory.
    pub data_dir: Option<PathBuf>,
    pub fsync: bool,
    /// Write a checkpoint after this many snapshots; 0 never does.
    pub checkpoint_every: u64,
}

impl NodeConfig {
    pub fn in_memory(engine: EngineConfig) -> Self {
        Self {
            engine,
            data_dir: None,
            fsync: false,
            checkpoint_every: 0,
        }
    }
}

pub struct Node {
    engine: Engine,
    log: Option<ReplayLog>,
    checkpoint_path: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    checkpoint_every: u64,
    snapshots_since_checkpoint: u64,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("last_seq", &self.engine.last_seq())
            .field("data_dir", &self.checkpoint_path)
            .finish()
    }
}

impl Node {
    /// Opens the node, recovering any state found in the data directory.
    pub fn open(config: &NodeConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        let Some(dir) = &config.data_dir else {
            return Ok(Self {
                engine: Engine::new(config.engine.clone(), unix_ms_now())?,
                log: None,
                checkpoint_path: None,
                clock,
                checkpoint_every: 0,
                snapshots_since_checkpoint: 0,
            });
        };
        std::fs::create_dir_all(dir)?;
        let checkpoint_path = dir.join(CHECKPOINT_FILE);
        let mut engine = match persist::load_checkpoint(&checkpoint_path)? {
            Some(e) => e,
            None => {
                let e = Engine::new(config.engine.clone(), unix_ms_now())?;
                persist::save_checkpoint(&e, &checkpoint_path)?;
                e
            }
        };
        let (log, contents) = ReplayLog::open(&dir.join(LOG_FILE), config.fsync)?;
        persist::replay(&mut engine, &contents.records)?;
        info!(
            dir = %dir.display(),
            last_seq = engine.last_seq(),
            replayed = contents.records.len(),
            "engine opened"
        );
        Ok(Self {
            engine,
            log: Some(log),
            checkpoint_path: Some(checkpoint_path),
            clock,
            checkpoint_every: config.checkpoint_every,
            snapshots_since_checkpoint: 0,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.checkpoint_path.as_deref().and_then(Path::parent)
    }

    fn now(&self) -> Hours {
        self.clock.now_hours(self.engine.epoch_unix_ms()).max(self.engine.clock())
    }

    /// Validates, logs, then applies a record built from `body`.
    fn commit(&mut self, body: RecordBody) -> Result<Applied> {
        let record = ReplayRecord {
            seq: self.engine.last_seq() + 1,
            ts: self.now(),
            body,
        };
        self.submit(record)
    }

    /// Logs and applies an externally sequenced record. Already-applied
    /// sequence numbers are acknowledged without effect.
    pub fn submit(&mut self, record: ReplayRecord) -> Result<Applied> {
        if record.seq <= self.engine.last_seq() {
            return Ok(Applied::AlreadyApplied);
        }
        self.engine.validate(&record)?;
        if let Some(log) = &mut self.log {
            log.append(&record)?;
        }
        let is_snapshot = matches!(record.body, RecordBody::Snapshot);
        let applied = self.engine.apply(&record)?;
        if is_snapshot {
            self.snapshots_since_checkpoint += 1;
            if self.checkpoint_every > 0 && self.snapshots_since_checkpoint >= self.checkpoint_every {
                self.checkpoint()?;
            }
        }
        Ok(applied)
    }

    /// Persists the engine so recovery can skip the log prefix.
    pub fn checkpoint(&mut self) -> Result<()> {
        if let Some(path) = &self.checkpoint_path {
            persist::save_checkpoint(&self.engine, path)?;
        }
        self.snapshots_since_checkpoint = 0;
        Ok(())
    }

    pub fn ingest(&mut self, req: IngestRequest) -> Result<IngestResponse> {
        let snapshot_id = self.engine.snapshot().snapshot_id;
        if self.engine.lifecycle(&req.content_id).is_some() {
            let (value, priority, attribution) = match self.engine.pool().get(&req.content_id) {
                Some(e) => (e.optimistic_severity, e.priority, e.attribution.clone()),
                None => (0.0, 0.0, None),
            };
            return Ok(IngestResponse {
                content_id: req.content_id,
                duplicate: true,
                optimistic_severity: value,
                priority,
                attribution,
                skipped_models: Vec::new(),
                snapshot_id,
            });
        }
        let content_id = req.content_id.clone();
        let applied = self.commit(RecordBody::Ingest {
            content_id: req.content_id,
            scores: req.scores,
            views: req.views,
        })?;
        let Applied::Ingested {
            estimate,
            priority,
            duplicate,
            skipped_models,
            ..
        } = applied
        else {
            unreachable!("ingest record yields an ingest outcome")
        };
        Ok(IngestResponse {
            content_id,
            duplicate,
            optimistic_severity: estimate.value,
            priority,
            attribution: estimate.attribution,
            skipped_models,
            snapshot_id,
        })
    }

    /// Hands the pool head to `reviewer_id`.
    pub fn next_job(&mut self, reviewer_id: &str) -> Result<JobResponse> {
        let Some(head) = self.engine.next_in_line().cloned() else {
            return Ok(JobResponse { job: None });
        };
        let applied = self.commit(RecordBody::Dispatch {
            reviewer_id: reviewer_id.to_string(),
            content_id: head,
        })?;
        let Applied::Dispatched(entry) = applied else {
            unreachable!("dispatch record yields a dispatch outcome")
        };
        Ok(JobResponse {
            job: Some(self.engine.job_payload(&entry)),
        })
    }

    pub fn label(&mut self, req: LabelRequest) -> Result<LabelResponse> {
        let content_id = req.content_id.clone();
        let applied = self.commit(RecordBody::Label {
            content_id: req.content_id,
            severity: req.severity,
            reviewer_id: req.reviewer_id,
        })?;
        let Applied::Labeled {
            removed,
            realized_iv,
            updated_cells,
        } = applied
        else {
            unreachable!("label record yields a label outcome")
        };
        Ok(LabelResponse {
            content_id,
            removed,
            realized_iv,
            updated_cells: updated_cells
                .into_iter()
                .map(|(model_id, bin)| CellRef { model_id, bin })
                .collect(),
            visible_from_snapshot: self.engine.snapshot().snapshot_id + 1,
        })
    }

    pub fn register_model(&mut self, req: RegisterModelRequest) -> Result<RegisterModelResponse> {
        let bandit = self.engine.config().bandit.clone();
        let layout = match (&req.bin_edges, &req.warmup_scores) {
            (Some(edges), None) => BinLayout::new(edges.clone())?,
            (None, Some(scores)) => {
                let k = req.bins.unwrap_or(bandit.bins_per_model);
                match req.alpha_quantile.unwrap_or(bandit.alpha_quantile) {
                    a if a >= 1.0 => fit_bins(scores, k)?,
                    a => fit_training_bins(scores, a, k)?,
                }
            }
            _ => {
                return Err(EngineError::BadRequest("give exactly one of `bin_edges` and `warmup_scores`".into()).into())
            }
        };
        let descriptor = RiskModelDescriptor {
            display_name: req.display_name.unwrap_or_else(|| req.model_id.to_string()),
            model_id: req.model_id.clone(),
            created_at: self.now(),
            bin_layout: layout.clone(),
            cold_start_prior: req.prior.unwrap_or(self.engine.config().prior),
        };
        let applied = self.commit(RecordBody::RegisterModel { descriptor })?;
        let Applied::Registered { version } = applied else {
            unreachable!("registration record yields a registration outcome")
        };
        Ok(RegisterModelResponse {
            model_id: req.model_id,
            registry_version: version.0,
            bin_edges: layout.edges().to_vec(),
            visible_from_snapshot: self.engine.snapshot().snapshot_id + 1,
        })
    }

    pub fn record_views(&mut self, events: Vec<ViewEvent>) -> Result<ViewsResponse> {
        let mut out = ViewsResponse::default();
        for ev in events {
            if self.engine.lifecycle(&ev.content_id).is_none() {
                out.unknown.push(ev.content_id);
                continue;
            }
            let times = if ev.times.is_empty() { vec![self.now()] } else { ev.times };
            if let Applied::Viewed { recorded, repriced } = self.commit(RecordBody::View {
                content_id: ev.content_id,
                times,
            })? {
                out.recorded += recorded;
                out.repriced += usize::from(repriced);
            }
        }
        Ok(out)
    }

    /// Publishes a new snapshot and reprices the pool.
    pub fn refresh(&mut self) -> Result<SnapshotResponse> {
        let Applied::Snapshot {
            snapshot_id,
            expired,
            evicted,
        } = self.commit(RecordBody::Snapshot)?
        else {
            unreachable!("snapshot record yields a snapshot outcome")
        };
        Ok(SnapshotResponse {
            snapshot_id,
            expired: expired.len(),
            evicted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node() -> (Node, ManualClock) {
        let clock = ManualClock::new(0.0);
        let node = Node::open(&NodeConfig::in_memory(EngineConfig::default()), Arc::new(clock.clone())).unwrap();
        (node, clock)
    }

    fn edges(id: &str) -> RegisterModelRequest {
        RegisterModelRequest::with_edges(id, vec![0.0, 0.5, 1.0])
    }

    #[test]
    fn register_from_warmup_scores_fits_bins() {
        let (mut n, _) = node();
        let scores: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let r = n
            .register_model(RegisterModelRequest {
                bins: Some(4),
                alpha_quantile: Some(0.25),
                ..RegisterModelRequest::with_warmup("m", scores)
            })
            .unwrap();
        assert_eq!(r.bin_edges.len(), 5);
        assert_eq!(r.bin_edges[0], 0.76);
        assert_eq!(r.visible_from_snapshot, 2);
    }

    #[test]
    fn register_needs_exactly_one_bin_source() {
        let (mut n, _) = node();
        let err = n
            .register_model(RegisterModelRequest {
                bin_edges: Some(vec![0.0, 1.0]),
                ..RegisterModelRequest::with_warmup("m", vec![0.5])
            })
            .unwrap_err();
        assert!(err.to_string().contains("exactly one"));
        n.register_model(edges("m")).unwrap();
        assert!(n.register_model(edges("m")).is_err());
    }

    #[test]
    fn clock_never_runs_backwards() {
        let (mut n, clock) = node();
        clock.set(2.0);
        n.refresh().unwrap();
        clock.set(1.0);
        n.refresh().unwrap();
        assert_eq!(n.engine().clock(), 2.0);
    }

    #[test]
    fn singleton_pool_round_trip() {
        let (mut n, clock) = node();
        n.register_model(edges("m")).unwrap();
        n.refresh().unwrap();
        let ing = n
            .ingest(IngestRequest {
                content_id: ContentId::new("c1"),
                scores: BTreeMap::from([(ModelId::new("m"), 0.8)]),
                views: vec![],
            })
            .unwrap();
        assert!(!ing.duplicate);
        assert!(n.ingest(IngestRequest {
            content_id: ContentId::new("c1"),
            scores: BTreeMap::new(),
            views: vec![],
        })
        .unwrap()
        .duplicate);
        clock.advance(0.1);
        let job = n.next_job("r1").unwrap().job.unwrap();
        assert_eq!(job.content_id, ContentId::new("c1"));
        assert_eq!(job.attribution, ing.attribution);
        assert_eq!(job.models[0].contribution, Some(job.optimistic_severity));
        assert!(n.next_job("r2").unwrap().job.is_none());
        let l = n
            .label(LabelRequest {
                content_id: ContentId::new("c1"),
                severity: 0.0,
                reviewer_id: "r1".into(),
            })
            .unwrap();
        assert!(!l.removed);
        assert_eq!(l.updated_cells, vec![CellRef { model_id: ModelId::new("m"), bin: 1 }]);
        assert_eq!(l.visible_from_snapshot, 3);
    }

    #[test]
    fn views_for_unknown_content_are_reported() {
        let (mut n, _) = node();
        n.ingest(IngestRequest {
            content_id: ContentId::new("c1"),
            scores: BTreeMap::new(),
            views: vec![],
        })
        .unwrap();
        let r = n
            .record_views(vec![
                ViewEvent {
                    content_id: ContentId::new("c1"),
                    times: vec![],
                },
                ViewEvent {
                    content_id: ContentId::new("zz"),
                    times: vec![0.5],
                },
            ])
            .unwrap();
        assert_eq!(r.recorded, 1);
        assert_eq!(r.unknown, vec![ContentId::new("zz")]);
    }
}
