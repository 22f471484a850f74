//! Deterministic engine state driven by sequenced replay records.
//!
//! Every mutation of the live engine is a [`ReplayRecord`]; the engine never
//! reads a clock of its own. Feeding the same records to a fresh engine (or
//! to a checkpoint plus the records after it) reproduces the same
//! coefficients and the same pool ordering.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sevbandit_core::{
    Attribution, BanditConfig, BanditState, ContentId, ContentItem, Hours, IngestOutcome, Lifecycle, ModelId,
    OptimisticPrior, ParameterSnapshot, QueueEntry, RegistryVersion, ReviewPool, ReviewerEvent, RiskModelDescriptor,
    SchedulerConfig, SeverityEstimate,
};
use tracing::warn;

use crate::error::EngineError;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub bandit: BanditConfig,
    pub scheduler: SchedulerConfig,
    /// Cold-start prior for models registered without one.
    pub prior: OptimisticPrior,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.bandit.validate()?;
        self.scheduler.validate()?;
        self.prior.validate()?;
        Ok(())
    }
}

/// One entry of the append-only replay log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    /// Strictly increasing, starting at 1, without gaps.
    pub seq: u64,
    /// Engine time the record takes effect at.
    pub ts: Hours,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RecordBody {
    Ingest {
        content_id: ContentId,
        scores: BTreeMap<ModelId, f64>,
        #[serde(default)]
        views: Vec<Hours>,
    },
    View {
        content_id: ContentId,
        times: Vec<Hours>,
    },
    Label {
        content_id: ContentId,
        severity: f64,
        reviewer_id: String,
    },
    RegisterModel {
        descriptor: RiskModelDescriptor,
    },
    /// The pool head handed to `reviewer_id`; replay checks the head is
    /// still `content_id`.
    Dispatch {
        reviewer_id: String,
        content_id: ContentId,
    },
    /// Batched refresh: evict stale examples, publish coefficients, reprice
    /// and expire the pool.
    Snapshot,
}

impl RecordBody {
    pub fn kind(&self) -> &'static str {
        match self {
            RecordBody::Ingest { .. } => "ingest",
            RecordBody::View { .. } => "view",
            RecordBody::Label { .. } => "label",
            RecordBody::RegisterModel { .. } => "register_model",
            RecordBody::Dispatch { .. } => "dispatch",
            RecordBody::Snapshot => "snapshot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    /// The record's sequence number was already applied; nothing changed.
    AlreadyApplied,
    Ingested {
        estimate: SeverityEstimate,
        priority: f64,
        duplicate: bool,
        skipped_models: Vec<ModelId>,
        shed: Vec<ContentId>,
    },
    Viewed {
        recorded: usize,
        repriced: bool,
    },
    Labeled {
        removed: bool,
        realized_iv: f64,
        updated_cells: Vec<(ModelId, usize)>,
    },
    Registered {
        version: RegistryVersion,
    },
    Dispatched(Box<QueueEntry>),
    Snapshot {
        snapshot_id: u64,
        expired: Vec<ContentId>,
        evicted: usize,
    },
}

/// Everything needed to score, dispatch and learn. Serializes to a
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engine {
    format_version: u32,
    config: EngineConfig,
    /// Wall-clock origin of engine time, milliseconds since the Unix epoch.
    epoch_unix_ms: u64,
    bandit: BanditState,
    snapshot: Arc<ParameterSnapshot>,
    pool: ReviewPool,
    last_seq: u64,
    clock: Hours,
    labels_since_snapshot: u64,
    views_recorded: u64,
    skipped_scores: u64,
}

impl Engine {
    pub fn new(config: EngineConfig, epoch_unix_ms: u64) -> Result<Self, EngineError> {
        config.validate()?;
        let mut bandit = BanditState::new(config.bandit.clone())?;
        let snapshot = Arc::new(bandit.publish_snapshot());
        let pool = ReviewPool::new(config.scheduler.clone(), snapshot.clone())?;
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config,
            epoch_unix_ms,
            bandit,
            snapshot,
            pool,
            last_seq: 0,
            clock: 0.0,
            labels_since_snapshot: 0,
            views_recorded: 0,
            skipped_scores: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn epoch_unix_ms(&self) -> u64 {
        self.epoch_unix_ms
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Time of the last applied record.
    pub fn clock(&self) -> Hours {
        self.clock
    }

    /// The published snapshot all scoring uses until the next refresh.
    pub fn snapshot(&self) -> &Arc<ParameterSnapshot> {
        &self.snapshot
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    pub fn pool(&self) -> &ReviewPool {
        &self.pool
    }

    pub fn labels_since_snapshot(&self) -> u64 {
        self.labels_since_snapshot
    }

    pub fn lifecycle(&self, id: &ContentId) -> Option<Lifecycle> {
        self.pool.lifecycle(id)
    }

    /// Id of the entry the next dispatch would hand out.
    pub fn next_in_line(&self) -> Option<&ContentId> {
        self.pool.peek().map(|e| &e.content.content_id)
    }

    /// Checks `record` against the current state without changing anything.
    pub fn validate(&self, record: &ReplayRecord) -> Result<(), EngineError> {
        if record.seq <= self.last_seq {
            return Ok(());
        }
        if record.seq != self.last_seq + 1 {
            return Err(EngineError::SequenceGap {
                expected: self.last_seq + 1,
                found: record.seq,
            });
        }
        if !(record.ts.is_finite() && record.ts >= self.clock) {
            return Err(EngineError::ClockRegression {
                seq: record.seq,
                ts: record.ts,
                clock: self.clock,
            });
        }
        match &record.body {
            RecordBody::Ingest { scores, views, .. } => {
                if let Some((m, z)) = scores.iter().find(|(_, z)| !z.is_finite()) {
                    return Err(EngineError::BadRequest(format!("score for `{m}` is not finite: {z}")));
                }
                if views.iter().any(|t| !t.is_finite()) {
                    return Err(EngineError::BadRequest("view times must be finite".into()));
                }
            }
            RecordBody::View { content_id, times } => {
                if self.pool.lifecycle(content_id).is_none() {
                    return Err(EngineError::UnknownContent(content_id.clone()));
                }
                if times.iter().any(|t| !t.is_finite()) {
                    return Err(EngineError::BadRequest("view times must be finite".into()));
                }
            }
            RecordBody::Label {
                content_id,
                severity,
                reviewer_id,
            } => {
                if !(severity.is_finite() && *severity >= 0.0) {
                    return Err(EngineError::BadRequest(format!(
                        "severity must be a finite non-negative number, got {severity}"
                    )));
                }
                match self.pool.lifecycle(content_id) {
                    None => return Err(EngineError::UnknownContent(content_id.clone())),
                    Some(Lifecycle::UnderReview) => {}
                    Some(state) => {
                        return Err(EngineError::NotUnderReview {
                            id: content_id.clone(),
                            state,
                        })
                    }
                }
                let holder = self.pool.reviewer_of(content_id).unwrap_or_default();
                if holder != reviewer_id {
                    return Err(EngineError::WrongReviewer {
                        id: content_id.clone(),
                        holder: holder.to_string(),
                    });
                }
            }
            RecordBody::RegisterModel { descriptor } => {
                if self.bandit.registry().contains(&descriptor.model_id) {
                    return Err(EngineError::DuplicateModel(descriptor.model_id.clone()));
                }
                descriptor.cold_start_prior.validate()?;
            }
            RecordBody::Dispatch { content_id, .. } => {
                let head = self.next_in_line();
                if head != Some(content_id) {
                    return Err(EngineError::DispatchMismatch {
                        seq: record.seq,
                        logged: content_id.clone(),
                        head: head.cloned(),
                    });
                }
            }
            RecordBody::Snapshot => {}
        }
        Ok(())
    }

    /// Applies `record`. Records at or below the last applied sequence
    /// number are acknowledged without effect.
    pub fn apply(&mut self, record: &ReplayRecord) -> Result<Applied, EngineError> {
        if record.seq <= self.last_seq {
            return Ok(Applied::AlreadyApplied);
        }
        self.validate(record)?;
        let ts = record.ts;
        let applied = match &record.body {
            RecordBody::Ingest {
                content_id,
                scores,
                views,
            } => self.ingest(content_id, scores, views, ts),
            RecordBody::View { content_id, times } => {
                let mut repriced = false;
                let live = matches!(
                    self.pool.lifecycle(content_id),
                    Some(Lifecycle::Pending | Lifecycle::UnderReview)
                );
                if live {
                    for &t in times {
                        repriced |= self.pool.record_view(content_id, t);
                    }
                    self.views_recorded += times.len() as u64;
                }
                Applied::Viewed {
                    recorded: if live { times.len() } else { 0 },
                    repriced,
                }
            }
            RecordBody::Label {
                content_id, severity, ..
            } => {
                let outcome = self.pool.complete_review(content_id, *severity, ts)?;
                let report = self.bandit.update_with_label(&outcome.example)?;
                self.labels_since_snapshot += 1;
                Applied::Labeled {
                    removed: outcome.removed,
                    realized_iv: outcome.realized_iv,
                    updated_cells: report.updated,
                }
            }
            RecordBody::RegisterModel { descriptor } => {
                self.bandit.advance_to(ts)?;
                let version = self.bandit.register_model(descriptor.clone())?;
                Applied::Registered { version }
            }
            RecordBody::Dispatch { reviewer_id, .. } => {
                let event = ReviewerEvent {
                    reviewer_id: reviewer_id.clone(),
                    available_at: ts,
                };
                let entry = self.pool.next_job(&event).expect("validated non-empty pool");
                Applied::Dispatched(Box::new(entry))
            }
            RecordBody::Snapshot => {
                let evicted = self.bandit.evict_stale(ts)?;
                self.snapshot = Arc::new(self.bandit.publish_snapshot());
                self.pool.reprice(self.snapshot.clone(), ts);
                let expired = self.pool.expire(ts);
                self.labels_since_snapshot = 0;
                Applied::Snapshot {
                    snapshot_id: self.snapshot.snapshot_id,
                    expired,
                    evicted,
                }
            }
        };
        self.last_seq = record.seq;
        self.clock = ts;
        Ok(applied)
    }

    fn ingest(&mut self, id: &ContentId, scores: &BTreeMap<ModelId, f64>, views: &[Hours], ts: Hours) -> Applied {
        let registry = self.bandit.registry();
        let (known, skipped): (BTreeMap<_, _>, BTreeMap<_, _>) =
            scores.iter().map(|(m, z)| (m.clone(), *z)).partition(|(m, _)| registry.contains(m));
        let skipped_models: Vec<ModelId> = skipped.into_keys().collect();
        if !skipped_models.is_empty() {
            warn!(content = %id, models = ?skipped_models, "scores for unregistered models skipped");
            self.skipped_scores += skipped_models.len() as u64;
        }
        let mut item = ContentItem::new(id.clone(), ts, known);
        let omega = self.config.scheduler.hawkes.omega;
        for &t in views {
            item.views.record(t, omega);
        }
        self.views_recorded += views.len() as u64;
        match self.pool.ingest(item, ts) {
            IngestOutcome::Accepted {
                estimate,
                priority,
                shed,
            } => Applied::Ingested {
                estimate,
                priority,
                duplicate: false,
                skipped_models,
                shed,
            },
            IngestOutcome::Duplicate => {
                let (estimate, priority) = match self.pool.get(id) {
                    Some(e) => (
                        SeverityEstimate {
                            value: e.optimistic_severity,
                            attribution: e.attribution.clone(),
                        },
                        e.priority,
                    ),
                    None => (
                        SeverityEstimate {
                            value: 0.0,
                            attribution: None,
                        },
                        0.0,
                    ),
                };
                Applied::Ingested {
                    estimate,
                    priority,
                    duplicate: true,
                    skipped_models,
                    shed: Vec::new(),
                }
            }
        }
    }

    /// Flat metrics map.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let m = self.pool.metrics();
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            out.insert(k.to_string(), v);
        };
        put("pool_depth", self.pool.len() as f64);
        put("in_review", self.pool.in_review_len() as f64);
        put("ingested", m.ingested as f64);
        put("duplicates", m.duplicates as f64);
        put("dispatched", m.dispatched as f64);
        put("reviewed", m.reviewed as f64);
        put("removed", m.removed as f64);
        put("expired", m.expired as f64);
        put("shed", m.shed as f64);
        put("realized_iv", m.realized_iv);
        put("missed_iv_estimate", m.missed_iv_estimate);
        put("pending_iv_estimate", self.pool.pending_iv_estimate(self.clock));
        put("unattributed_dispatches", m.unattributed_dispatches as f64);
        put("snapshot_id", self.snapshot.snapshot_id as f64);
        put("registry_version", self.bandit.registry().version().0 as f64);
        put("registered_models", self.bandit.registry().len() as f64);
        put("labels_since_snapshot", self.labels_since_snapshot as f64);
        put("views_recorded", self.views_recorded as f64);
        put("skipped_scores", self.skipped_scores as f64);
        put("last_seq", self.last_seq as f64);
        put("engine_clock_hours", self.clock);
        let attributed: u64 = m.attribution_counts.values().sum();
        for (model, &n) in &m.attribution_counts {
            out.insert(format!("attribution_count:{model}"), n as f64);
            out.insert(format!("attribution_share:{model}"), n as f64 / attributed as f64);
        }
        out
    }

    /// Dispatch payload for `entry`, with every model's coefficients from
    /// the current snapshot.
    pub fn job_payload(&self, entry: &QueueEntry) -> JobPayload {
        let snap = &self.snapshot;
        let models = entry
            .content
            .risk_scores
            .iter()
            .map(|(model_id, &score)| {
                let published = snap.model(model_id);
                let bin = published.and_then(|m| m.bin_layout.bin_of(score));
                let cell = published.zip(bin).map(|(m, j)| m.cells[j]);
                ModelLine {
                    model_id: model_id.clone(),
                    display_name: published.map(|m| m.display_name.clone()),
                    score,
                    bin,
                    beta_hat: cell.map(|c| c.beta_hat),
                    ucb_bonus: cell.map(|c| c.ucb_bonus),
                    optimistic: cell.map(|c| c.optimistic),
                    n_eff: cell.map(|c| c.n_eff),
                    contribution: cell.map(|c| c.optimistic * score),
                }
            })
            .collect();
        JobPayload {
            content_id: entry.content.content_id.clone(),
            arrival_time: entry.content.arrival_time,
            scores: entry.content.risk_scores.clone(),
            optimistic_severity: entry.optimistic_severity,
            priority: entry.priority,
            view_velocity: entry.view_velocity,
            predicted_views: entry.predicted_views,
            attribution: entry.attribution.clone(),
            snapshot_id: entry.snapshot_id,
            models,
        }
    }
}

/// One model's row in a dispatched job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLine {
    pub model_id: ModelId,
    /// `None` when the model is not in the published snapshot yet.
    pub display_name: Option<String>,
    pub score: f64,
    /// `None` when the score falls outside every bin.
    pub bin: Option<usize>,
    pub beta_hat: Option<f64>,
    pub ucb_bonus: Option<f64>,
    pub optimistic: Option<f64>,
    pub n_eff: Option<f64>,
    /// Calibrated contribution `optimistic * score`.
    pub contribution: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobPayload {
    pub content_id: ContentId,
    pub arrival_time: Hours,
    pub scores: BTreeMap<ModelId, f64>,
    pub optimistic_severity: f64,
    pub priority: f64,
    pub view_velocity: f64,
    pub predicted_views: f64,
    /// The (model, bin) achieving the maximum calibrated score.
    pub attribution: Option<Attribution>,
    pub snapshot_id: u64,
    pub models: Vec<ModelLine>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use sevbandit_core::BinLayout;

    fn rec(seq: u64, ts: Hours, body: RecordBody) -> ReplayRecord {
        ReplayRecord { seq, ts, body }
    }

    fn descriptor(id: &str, edges: Vec<f64>) -> RiskModelDescriptor {
        RiskModelDescriptor {
            model_id: ModelId::new(id),
            display_name: id.to_uppercase(),
            created_at: 0.0,
            bin_layout: BinLayout::new(edges).unwrap(),
            cold_start_prior: OptimisticPrior::default(),
        }
    }

    fn ingest(id: &str, scores: &[(&str, f64)]) -> RecordBody {
        RecordBody::Ingest {
            content_id: ContentId::new(id),
            scores: scores.iter().map(|(m, z)| (ModelId::new(*m), *z)).collect(),
            views: Vec::new(),
        }
    }

    fn engine_with_model() -> Engine {
        let mut e = Engine::new(EngineConfig::default(), 0).unwrap();
        e.apply(&rec(
            1,
            0.0,
            RecordBody::RegisterModel {
                descriptor: descriptor("m", vec![0.0, 0.5, 1.0]),
            },
        ))
        .unwrap();
        e.apply(&rec(2, 0.0, RecordBody::Snapshot)).unwrap();
        e
    }

    #[test]
    fn record_json_shape() {
        let r = rec(3, 0.25, ingest("c1", &[("m", 0.5)]));
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["seq"], 3);
        assert_eq!(v["kind"], "ingest");
        assert_eq!(v["payload"]["scores"]["m"], 0.5);
        let back: ReplayRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        let snap: ReplayRecord = serde_json::from_str(r#"{"seq":1,"ts":0.0,"kind":"snapshot"}"#).unwrap();
        assert_eq!(snap.body, RecordBody::Snapshot);
    }

    #[test]
    fn fresh_engine_publishes_empty_prior_snapshot() {
        let e = Engine::new(EngineConfig::default(), 0).unwrap();
        assert_eq!(e.snapshot().snapshot_id, 1);
        assert!(e.snapshot().models().is_empty());
        assert_eq!(e.last_seq(), 0);
    }

    #[test]
    fn sequence_rules() {
        let mut e = engine_with_model();
        let err = e.apply(&rec(5, 0.0, RecordBody::Snapshot)).unwrap_err();
        assert_eq!(err, EngineError::SequenceGap { expected: 3, found: 5 });
        // replaying an applied record is a no-op
        let before = e.clone();
        assert_eq!(e.apply(&rec(2, 0.0, RecordBody::Snapshot)).unwrap(), Applied::AlreadyApplied);
        assert_eq!(e, before);
        e.apply(&rec(3, 1.0, RecordBody::Snapshot)).unwrap();
        assert!(matches!(
            e.apply(&rec(4, 0.5, RecordBody::Snapshot)),
            Err(EngineError::ClockRegression { seq: 4, .. })
        ));
    }

    #[test]
    fn empty_scores_give_zero_estimate() {
        let mut e = engine_with_model();
        let out = e.apply(&rec(3, 0.0, ingest("c1", &[]))).unwrap();
        let Applied::Ingested { estimate, .. } = out else { panic!() };
        assert_eq!(estimate.value, 0.0);
        assert_eq!(estimate.attribution, None);
    }

    #[test]
    fn unknown_models_are_skipped() {
        let mut e = engine_with_model();
        let out = e.apply(&rec(3, 0.0, ingest("c1", &[("m", 0.7), ("ghost", 5.0)]))).unwrap();
        let Applied::Ingested {
            estimate,
            skipped_models,
            ..
        } = out
        else {
            panic!()
        };
        assert_eq!(skipped_models, vec![ModelId::new("ghost")]);
        // prior beta 1 + bonus 2 in bin 1
        assert_eq!(estimate.value, 3.0 * 0.7);
        assert_eq!(estimate.attribution.unwrap().bin, 1);
        assert_eq!(e.pool().get(&ContentId::new("c1")).unwrap().content.risk_scores.len(), 1);
    }

    #[test]
    fn duplicate_ingest_is_acknowledged_without_change() {
        let mut e = engine_with_model();
        e.apply(&rec(3, 0.0, ingest("c1", &[("m", 0.7)]))).unwrap();
        let pool = e.pool().clone();
        let out = e.apply(&rec(4, 0.0, ingest("c1", &[("m", 0.1)]))).unwrap();
        assert!(matches!(out, Applied::Ingested { duplicate: true, .. }));
        assert!(e.pool().ordered().eq(pool.ordered()));
    }

    #[test]
    fn label_requires_holding_reviewer() {
        let mut e = engine_with_model();
        e.apply(&rec(3, 0.0, ingest("c1", &[("m", 0.7)]))).unwrap();
        let label = |seq, who: &str| {
            rec(
                seq,
                0.1,
                RecordBody::Label {
                    content_id: ContentId::new("c1"),
                    severity: 2.0,
                    reviewer_id: who.into(),
                },
            )
        };
        assert!(matches!(e.apply(&label(4, "r1")), Err(EngineError::NotUnderReview { .. })));
        e.apply(&rec(
            4,
            0.0,
            RecordBody::Dispatch {
                reviewer_id: "r1".into(),
                content_id: ContentId::new("c1"),
            },
        ))
        .unwrap();
        assert!(matches!(e.apply(&label(5, "r2")), Err(EngineError::WrongReviewer { .. })));
        let out = e.apply(&label(5, "r1")).unwrap();
        assert!(matches!(out, Applied::Labeled { removed: true, .. }));
        assert_eq!(e.lifecycle(&ContentId::new("c1")), Some(Lifecycle::Removed));
    }

    #[test]
    fn dispatch_must_match_pool_head() {
        let mut e = engine_with_model();
        e.apply(&rec(3, 0.0, ingest("lo", &[("m", 0.2)]))).unwrap();
        e.apply(&rec(4, 0.0, ingest("hi", &[("m", 0.9)]))).unwrap();
        assert_eq!(e.next_in_line(), Some(&ContentId::new("hi")));
        let err = e
            .apply(&rec(
                5,
                0.0,
                RecordBody::Dispatch {
                    reviewer_id: "r".into(),
                    content_id: ContentId::new("lo"),
                },
            ))
            .unwrap_err();
        assert!(matches!(err, EngineError::DispatchMismatch { seq: 5, .. }));
    }

    #[test]
    fn labels_show_up_only_after_the_next_snapshot() {
        let mut e = engine_with_model();
        e.apply(&rec(3, 0.0, ingest("c1", &[("m", 0.7)]))).unwrap();
        e.apply(&rec(
            4,
            0.0,
            RecordBody::Dispatch {
                reviewer_id: "r".into(),
                content_id: ContentId::new("c1"),
            },
        ))
        .unwrap();
        e.apply(&rec(
            5,
            0.0,
            RecordBody::Label {
                content_id: ContentId::new("c1"),
                severity: 1.4,
                reviewer_id: "r".into(),
            },
        ))
        .unwrap();
        let m = ModelId::new("m");
        assert_eq!(e.snapshot().model(&m).unwrap().cells[1].n_eff, 0.0);
        e.apply(&rec(6, 0.0, RecordBody::Snapshot)).unwrap();
        let cell = e.snapshot().model(&m).unwrap().cells[1];
        assert_eq!(cell.n_eff, 1.0);
        assert_eq!(cell.beta_hat, 2.0);
    }

    #[test]
    fn metrics_are_flat() {
        let e = engine_with_model();
        let m = e.metrics();
        assert_eq!(m["pool_depth"], 0.0);
        assert_eq!(m["registered_models"], 1.0);
        assert_eq!(m["last_seq"], 2.0);
    }
}
