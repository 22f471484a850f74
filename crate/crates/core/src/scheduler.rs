//! Pool of live content ordered by the rate of change of integrity value.
//!
//! Priority of an item is `max(y_hat, 0) * (view_velocity + velocity_constant)`:
//! the time derivative of `(views + constant) * severity` when severity is
//! held at its optimistic estimate. Reviewers always take the highest
//! priority; ties go to the earliest arrival, then the smallest content id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::bandit::{Attribution, LabeledExample, ParameterSnapshot, ScoreMode, SeverityEstimate};
use crate::error::{Error, Result};
use crate::iv::{expected_views_from_intensity, integrity_value, HawkesParams, IntensityState, IvConfig, DEFAULT_HORIZON_HOURS};
use crate::types::{ContentId, Hours, ModelId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Added to view velocity in the priority; lets severe content with no
    /// reach still rank.
    pub velocity_constant: f64,
    /// Pending entries beyond this are shed, lowest priority first.
    pub pool_capacity: usize,
    /// Pending content older than this (hours) expires.
    pub content_lifetime_max: Hours,
    /// Severity estimate used in the priority.
    pub severity_mode: ScoreMode,
    /// A view that multiplies an entry's velocity by at least this factor
    /// since it was last priced triggers an immediate reprice of that entry.
    pub burst_factor: f64,
    /// Window for predicted future views, hours.
    pub horizon: Hours,
    /// Reach model shared by all content of this pool.
    pub hawkes: HawkesParams,
    pub iv: IvConfig,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        let iv = IvConfig::default();
        Self {
            velocity_constant: iv.additive_constant / DEFAULT_HORIZON_HOURS,
            pool_capacity: 1_000_000,
            content_lifetime_max: DEFAULT_HORIZON_HOURS,
            severity_mode: ScoreMode::Optimistic,
            burst_factor: 2.0,
            horizon: DEFAULT_HORIZON_HOURS,
            hawkes: HawkesParams::default(),
            iv,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        self.hawkes.validate()?;
        if !(self.velocity_constant >= 0.0 && self.velocity_constant.is_finite()) {
            return Err(Error::invalid("velocity_constant", "must be finite and >= 0"));
        }
        if self.pool_capacity == 0 {
            return Err(Error::invalid("pool_capacity", "must be at least 1"));
        }
        if !(self.content_lifetime_max > 0.0) {
            return Err(Error::invalid("content_lifetime_max", "must be positive"));
        }
        if !(self.burst_factor >= 1.0) {
            return Err(Error::invalid("burst_factor", "must be >= 1"));
        }
        if !(self.horizon >= 0.0) {
            return Err(Error::invalid("horizon", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Pending,
    UnderReview,
    /// Reviewed and found non-violating; stays up.
    Reviewed,
    Expired,
    /// Reviewed, found violating, taken down.
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentItem {
    pub content_id: ContentId,
    pub arrival_time: Hours,
    pub risk_scores: BTreeMap<ModelId, f64>,
    pub views: IntensityState,
    pub lifecycle: Lifecycle,
}

impl ContentItem {
    pub fn new(content_id: impl Into<ContentId>, arrival_time: Hours, risk_scores: BTreeMap<ModelId, f64>) -> Self {
        Self {
            content_id: content_id.into(),
            arrival_time,
            risk_scores,
            views: IntensityState::new(),
            lifecycle: Lifecycle::Pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub content: ContentItem,
    pub priority: f64,
    pub optimistic_severity: f64,
    pub view_velocity: f64,
    pub attribution: Option<Attribution>,
    pub enqueued_at: Hours,
    /// Snapshot the priority was computed against.
    pub snapshot_id: u64,
    /// Expected future views over the horizon when last priced (or dispatched).
    pub predicted_views: f64,
}

impl QueueEntry {
    fn key(&self) -> QueueKey {
        QueueKey {
            priority: self.priority,
            arrival: self.content.arrival_time,
            id: self.content.content_id.clone(),
        }
    }
}

/// Ordering key; the smallest key is served first.
#[derive(Debug, Clone, PartialEq)]
struct QueueKey {
    priority: f64,
    arrival: Hours,
    id: ContentId,
}

impl Eq for QueueKey {}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| self.arrival.total_cmp(&other.arrival))
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerEvent {
    pub reviewer_id: String,
    pub available_at: Hours,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InReview {
    entry: QueueEntry,
    reviewer_id: String,
    dispatched_at: Hours,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewOutcome {
    pub example: LabeledExample,
    pub realized_iv: f64,
    pub removed: bool,
    pub attribution: Option<Attribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestOutcome {
    Accepted {
        estimate: SeverityEstimate,
        priority: f64,
        /// Entries dropped to stay within capacity (may include the new one).
        shed: Vec<ContentId>,
    },
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolMetrics {
    pub ingested: u64,
    pub duplicates: u64,
    pub dispatched: u64,
    pub reviewed: u64,
    pub removed: u64,
    pub expired: u64,
    pub shed: u64,
    pub realized_iv: f64,
    /// Estimated IV of content that expired unreviewed, valued at its
    /// optimistic severity.
    pub missed_iv_estimate: f64,
    /// Dispatches per attributed model.
    pub attribution_counts: BTreeMap<ModelId, u64>,
    pub unattributed_dispatches: u64,
}

/// The pool `C_t` of reviewable content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoolRepr", into = "PoolRepr")]
pub struct ReviewPool {
    config: SchedulerConfig,
    snapshot: Arc<ParameterSnapshot>,
    /// Pending entries in dispatch order.
    queue: BTreeMap<QueueKey, QueueEntry>,
    /// Queue position of each pending entry.
    index: HashMap<ContentId, QueueKey>,
    in_review: BTreeMap<ContentId, InReview>,
    terminal: HashMap<ContentId, Lifecycle>,
    metrics: PoolMetrics,
}

#[derive(Clone, Serialize, Deserialize)]
struct PoolRepr {
    config: SchedulerConfig,
    snapshot: Arc<ParameterSnapshot>,
    pending: BTreeMap<ContentId, QueueEntry>,
    in_review: BTreeMap<ContentId, InReview>,
    terminal: BTreeMap<ContentId, Lifecycle>,
    metrics: PoolMetrics,
}

impl From<PoolRepr> for ReviewPool {
    fn from(r: PoolRepr) -> Self {
        let mut queue = BTreeMap::new();
        let mut index = HashMap::with_capacity(r.pending.len());
        for (id, entry) in r.pending {
            let key = entry.key();
            index.insert(id, key.clone());
            queue.insert(key, entry);
        }
        Self {
            config: r.config,
            snapshot: r.snapshot,
            queue,
            index,
            in_review: r.in_review,
            terminal: r.terminal.into_iter().collect(),
            metrics: r.metrics,
        }
    }
}

impl From<ReviewPool> for PoolRepr {
    fn from(p: ReviewPool) -> Self {
        Self {
            config: p.config,
            snapshot: p.snapshot,
            pending: p
                .queue
                .into_values()
                .map(|e| (e.content.content_id.clone(), e))
                .collect(),
            in_review: p.in_review,
            terminal: p.terminal.into_iter().collect(),
            metrics: p.metrics,
        }
    }
}

impl ReviewPool {
    pub fn new(config: SchedulerConfig, snapshot: Arc<ParameterSnapshot>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            snapshot,
            queue: BTreeMap::new(),
            index: HashMap::new(),
            in_review: BTreeMap::new(),
            terminal: HashMap::new(),
            metrics: PoolMetrics::default(),
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &Arc<ParameterSnapshot> {
        &self.snapshot
    }

    pub fn metrics(&self) -> &PoolMetrics {
        &self.metrics
    }

    /// Number of pending entries.
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn in_review_len(&self) -> usize {
        self.in_review.len()
    }

    pub fn get(&self, id: &ContentId) -> Option<&QueueEntry> {
        match self.index.get(id) {
            Some(key) => self.queue.get(key),
            None => self.in_review.get(id).map(|r| &r.entry),
        }
    }

    pub fn lifecycle(&self, id: &ContentId) -> Option<Lifecycle> {
        if self.index.contains_key(id) {
            Some(Lifecycle::Pending)
        } else if self.in_review.contains_key(id) {
            Some(Lifecycle::UnderReview)
        } else {
            self.terminal.get(id).copied()
        }
    }

    /// Pending entries in dispatch order.
    pub fn ordered(&self) -> impl Iterator<Item = &QueueEntry> {
        self.queue.values()
    }

    /// Top of the queue without removing it.
    pub fn peek(&self) -> Option<&QueueEntry> {
        self.queue.values().next()
    }

    fn price(&self, content: &ContentItem, now: Hours) -> (SeverityEstimate, f64, f64) {
        let estimate = self.snapshot.severity(&content.risk_scores, self.config.severity_mode);
        let velocity = content.views.intensity(&self.config.hawkes, now);
        // Written out rather than `max(0.0)` so a `-0.0` estimate cannot
        // produce a `-0.0` priority, which `total_cmp` would rank below 0.
        let severity = if estimate.value > 0.0 { estimate.value } else { 0.0 };
        let priority = severity * (velocity + self.config.velocity_constant);
        (estimate, velocity, priority)
    }

    fn expected_views(&self, velocity: f64) -> f64 {
        expected_views_from_intensity(velocity, &self.config.hawkes, self.config.horizon)
            .expect("hawkes params validated at construction")
    }

    fn make_entry(&self, content: ContentItem, now: Hours, enqueued_at: Hours) -> QueueEntry {
        let (estimate, velocity, priority) = self.price(&content, now);
        QueueEntry {
            content,
            priority,
            optimistic_severity: estimate.value,
            view_velocity: velocity,
            attribution: estimate.attribution,
            enqueued_at,
            snapshot_id: self.snapshot.snapshot_id,
            predicted_views: self.expected_views(velocity),
        }
    }

    fn insert_pending(&mut self, entry: QueueEntry) {
        let key = entry.key();
        self.index.insert(entry.content.content_id.clone(), key.clone());
        self.queue.insert(key, entry);
    }

    fn remove_pending(&mut self, key: &QueueKey) -> QueueEntry {
        self.index.remove(&key.id);
        self.queue.remove(key).expect("index mirrors queue")
    }

    /// Scores `content` against the current snapshot and adds it to the pool.
    pub fn ingest(&mut self, mut content: ContentItem, now: Hours) -> IngestOutcome {
        if self.lifecycle(&content.content_id).is_some() {
            warn!(content = %content.content_id, "duplicate content ignored");
            self.metrics.duplicates += 1;
            return IngestOutcome::Duplicate;
        }
        content.lifecycle = Lifecycle::Pending;
        let entry = self.make_entry(content, now, now);
        let estimate = SeverityEstimate {
            value: entry.optimistic_severity,
            attribution: entry.attribution.clone(),
        };
        let priority = entry.priority;
        self.insert_pending(entry);
        self.metrics.ingested += 1;

        let mut shed = Vec::new();
        while self.queue.len() > self.config.pool_capacity {
            let (worst, mut entry) = self.queue.pop_last().expect("over capacity");
            self.index.remove(&worst.id);
            entry.content.lifecycle = Lifecycle::Expired;
            self.metrics.shed += 1;
            self.metrics.expired += 1;
            self.metrics.missed_iv_estimate += self.missed_estimate(&entry, now);
            self.terminal.insert(worst.id.clone(), Lifecycle::Expired);
            shed.push(worst.id);
        }
        IngestOutcome::Accepted {
            estimate,
            priority,
            shed,
        }
    }

    fn missed_estimate(&self, entry: &QueueEntry, now: Hours) -> f64 {
        let views = self.expected_views(entry.content.views.intensity(&self.config.hawkes, now));
        integrity_value(views, entry.optimistic_severity.max(0.0), &self.config.iv).unwrap_or(0.0)
    }

    fn dispatch(&mut self, mut entry: QueueEntry, event: &ReviewerEvent) -> QueueEntry {
        entry.content.lifecycle = Lifecycle::UnderReview;
        let now = event.available_at;
        entry.view_velocity = entry.content.views.intensity(&self.config.hawkes, now);
        entry.predicted_views = self.expected_views(entry.view_velocity);
        self.metrics.dispatched += 1;
        match &entry.attribution {
            Some(a) => *self.metrics.attribution_counts.entry(a.model_id.clone()).or_default() += 1,
            None => self.metrics.unattributed_dispatches += 1,
        }
        self.in_review.insert(
            entry.content.content_id.clone(),
            InReview {
                entry: entry.clone(),
                reviewer_id: event.reviewer_id.clone(),
                dispatched_at: now,
            },
        );
        entry
    }

    /// Hands the highest-priority entry to a reviewer; `None` means the pool
    /// is empty and the reviewer idles.
    pub fn next_job(&mut self, event: &ReviewerEvent) -> Option<QueueEntry> {
        let (key, entry) = self.queue.pop_first()?;
        self.index.remove(&key.id);
        Some(self.dispatch(entry, event))
    }

    /// Hands out the pending entry maximizing `rank` (entries ranked `None`
    /// are skipped), breaking ties in queue order. Linear in pool size; used
    /// by comparison policies that do not follow the pool ordering.
    pub fn next_job_by<F>(&mut self, event: &ReviewerEvent, mut rank: F) -> Option<QueueEntry>
    where
        F: FnMut(&QueueEntry) -> Option<f64>,
    {
        let mut best: Option<(f64, &QueueKey)> = None;
        for (key, entry) in &self.queue {
            let Some(r) = rank(entry) else {
                continue;
            };
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, key));
            }
        }
        let key = best?.1.clone();
        let entry = self.remove_pending(&key);
        Some(self.dispatch(entry, event))
    }

    /// Records the reviewer's severity for an entry under review.
    pub fn complete_review(&mut self, id: &ContentId, severity: f64, label_time: Hours) -> Result<ReviewOutcome> {
        if !(severity.is_finite() && severity >= 0.0) {
            return Err(Error::NegativeSeverity(severity));
        }
        let Some(review) = self.in_review.remove(id) else {
            return Err(match self.lifecycle(id) {
                Some(state) => Error::NotUnderReview { id: id.clone(), state },
                None => Error::UnknownContent(id.clone()),
            });
        };
        let entry = review.entry;
        let removed = severity > 0.0;
        let state = if removed { Lifecycle::Removed } else { Lifecycle::Reviewed };
        let realized_iv = integrity_value(entry.predicted_views, severity, &self.config.iv)?;
        self.terminal.insert(id.clone(), state);
        self.metrics.reviewed += 1;
        if removed {
            self.metrics.removed += 1;
        }
        self.metrics.realized_iv += realized_iv;
        Ok(ReviewOutcome {
            example: LabeledExample {
                content_id: id.clone(),
                scores: entry.content.risk_scores,
                severity,
                label_time,
            },
            realized_iv,
            removed,
            attribution: entry.attribution,
        })
    }

    /// Reviewer currently holding an entry.
    pub fn reviewer_of(&self, id: &ContentId) -> Option<&str> {
        self.in_review.get(id).map(|r| r.reviewer_id.as_str())
    }

    /// Recomputes every pending priority against `snapshot` at time `now`.
    pub fn reprice(&mut self, snapshot: Arc<ParameterSnapshot>, now: Hours) {
        self.snapshot = snapshot;
        let old = std::mem::take(&mut self.queue);
        let mut rebuilt: Vec<(QueueKey, QueueEntry)> = old
            .into_iter()
            .map(|(mut key, old)| {
                let entry = self.make_entry(old.content, now, old.enqueued_at);
                key.priority = entry.priority;
                if let Some(k) = self.index.get_mut(&key.id) {
                    k.priority = entry.priority;
                }
                (key, entry)
            })
            .collect();
        rebuilt.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        self.queue = rebuilt.into_iter().collect();
    }

    /// Registers a view. Returns true when the view triggered a reprice of
    /// its entry.
    pub fn record_view(&mut self, id: &ContentId, t: Hours) -> bool {
        let omega = self.config.hawkes.omega;
        let Some(key) = self.index.get(id) else {
            if let Some(r) = self.in_review.get_mut(id) {
                r.entry.content.views.record(t, omega);
            }
            return false;
        };
        let entry = self.queue.get_mut(key).expect("index mirrors queue");
        entry.content.views.record(t, omega);
        let velocity = entry.content.views.intensity(&self.config.hawkes, t);
        if velocity < self.config.burst_factor * entry.view_velocity {
            return false;
        }
        let key = key.clone();
        let old = self.remove_pending(&key);
        let entry = self.make_entry(old.content, t, old.enqueued_at);
        self.insert_pending(entry);
        true
    }

    /// Drops pending content older than the lifetime limit.
    pub fn expire(&mut self, now: Hours) -> Vec<ContentId> {
        let limit = self.config.content_lifetime_max;
        let stale: Vec<QueueKey> = self
            .queue
            .iter()
            .filter(|(_, e)| now - e.content.arrival_time > limit)
            .map(|(k, _)| k.clone())
            .collect();
        let mut ids = Vec::with_capacity(stale.len());
        for key in stale {
            let entry = self.remove_pending(&key);
            self.metrics.expired += 1;
            self.metrics.missed_iv_estimate += self.missed_estimate(&entry, now);
            self.terminal.insert(key.id.clone(), Lifecycle::Expired);
            ids.push(key.id);
        }
        ids.sort();
        ids
    }

    /// Estimated IV still waiting in the pool.
    pub fn pending_iv_estimate(&self, now: Hours) -> f64 {
        self.queue.values().map(|e| self.missed_estimate(e, now)).sum()
    }

    /// Count of content per lifecycle state, including terminal states.
    pub fn lifecycle_counts(&self) -> BTreeMap<&'static str, u64> {
        let mut counts = BTreeMap::from([
            ("pending", self.queue.len() as u64),
            ("under_review", self.in_review.len() as u64),
            ("reviewed", 0),
            ("removed", 0),
            ("expired", 0),
        ]);
        for state in self.terminal.values() {
            let key = match state {
                Lifecycle::Reviewed => "reviewed",
                Lifecycle::Removed => "removed",
                Lifecycle::Expired => "expired",
                Lifecycle::Pending | Lifecycle::UnderReview => unreachable!("terminal map holds final states"),
            };
            *counts.get_mut(key).expect("seeded above") += 1;
        }
        counts
    }
}
