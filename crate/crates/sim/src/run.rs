//! Closed-loop discrete-event run: arrivals are scored and pooled, reviewers
//! pull jobs as they free up, labels train the bandit, and snapshots are
//! published on the refresh cadence.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sevbandit_core::{
    BanditState, ContentId, ContentItem, Hours, ModelId, ParameterSnapshot, ReviewPool, ReviewerEvent,
};

use crate::error::Result;
use crate::policy::{max_raw_rank, point_snapshot, thompson_snapshot, PolicySpec, RoundRobin};
use crate::scenario::ScenarioConfig;
use crate::stream::{generate_stream, rng_for, EventStream, POLICY_STREAM};

/// Activity between two consecutive snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub start: Hours,
    pub end: Hours,
    /// Snapshot in force during the interval.
    pub snapshot_id: u64,
    pub arrivals: u64,
    pub reviews: u64,
    /// Ground-truth IV removed by reviews completed in the interval.
    pub realized_iv: f64,
    /// Pending items at the end of the interval.
    pub pool_depth: usize,
    /// Dispatches per attributed model.
    pub dispatches: BTreeMap<ModelId, u64>,
    pub unattributed_dispatches: u64,
    /// Learned `beta_hat` per model and bin at the end of the interval.
    pub beta_hat: BTreeMap<ModelId, Vec<f64>>,
}

impl IntervalStats {
    pub fn total_dispatches(&self) -> u64 {
        self.dispatches.values().sum::<u64>() + self.unattributed_dispatches
    }

    /// Fraction of this interval's dispatches attributed to `model`.
    pub fn attribution_share(&self, model: &ModelId) -> Option<f64> {
        let total = self.total_dispatches();
        (total > 0).then(|| self.dispatches.get(model).copied().unwrap_or(0) as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: String,
    pub policy: PolicySpec,
    pub seed: u64,
    /// Sum over removed content of `(views after removal + c) * severity`,
    /// counting ground-truth views within the content lifetime.
    pub realized_iv: f64,
    /// IV available if every violating item were removed on arrival.
    pub total_violating_iv: f64,
    /// Realized IV as the engine estimates it from predicted views.
    pub estimated_realized_iv: f64,
    pub arrivals: u64,
    pub dispatches: u64,
    pub reviews: u64,
    pub removed: u64,
    pub expired: u64,
    /// Reviewer-hours spent on completed reviews.
    pub reviewer_hours: f64,
    /// Dispatches per attributed model over the whole run.
    pub attribution: BTreeMap<ModelId, u64>,
    /// First time a label reached one of the model's cells.
    pub first_label: BTreeMap<ModelId, Hours>,
    pub registered_at: BTreeMap<ModelId, Hours>,
    pub snapshots: u64,
    pub intervals: Vec<IntervalStats>,
}

impl SimResult {
    /// Per-snapshot attribution share of `model` for intervals starting at or
    /// after `from`; intervals without dispatches are skipped.
    pub fn attribution_shares_after(&self, model: &ModelId, from: Hours) -> Vec<(u64, f64)> {
        self.intervals
            .iter()
            .filter(|i| i.start >= from)
            .filter_map(|i| i.attribution_share(model).map(|s| (i.snapshot_id, s)))
            .collect()
    }

    /// Number of snapshots after `from` until the attribution share of
    /// `model` first exceeds `threshold`.
    pub fn snapshots_until_share(&self, model: &ModelId, from: Hours, threshold: f64) -> Option<usize> {
        self.intervals
            .iter()
            .filter(|i| i.start >= from)
            .position(|i| i.attribution_share(model).is_some_and(|s| s > threshold))
            .map(|p| p + 1)
    }

    /// Largest attribution share of `model` over intervals starting at or
    /// after `from`.
    pub fn max_share_after(&self, model: &ModelId, from: Hours) -> f64 {
        self.attribution_shares_after(model, from)
            .into_iter()
            .map(|(_, s)| s)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Register(usize),
    Tick,
    Complete { reviewer: usize },
    Arrival(usize),
    View { item: usize, k: usize },
}

impl EventKind {
    /// Processing order of simultaneous events.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Register(_) => 0,
            EventKind::Tick => 1,
            EventKind::Complete { .. } => 2,
            EventKind::Arrival(_) => 3,
            EventKind::View { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: Hours,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Default)]
struct Agenda {
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
}

impl Agenda {
    fn push(&mut self, time: Hours, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }
}

struct Sim<'a> {
    scenario: &'a ScenarioConfig,
    stream: &'a EventStream,
    policy: &'a PolicySpec,
    bandit: BanditState,
    pool: ReviewPool,
    index: HashMap<ContentId, usize>,
    agenda: Agenda,
    /// Item each reviewer holds, if any.
    busy: Vec<Option<usize>>,
    idle: BTreeSet<usize>,
    unlimited: bool,
    frozen: Option<Arc<ParameterSnapshot>>,
    policy_rng: rand_chacha::ChaCha8Rng,
    round_robin: RoundRobin,
    current: IntervalStats,
    result: SimResult,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a ScenarioConfig, stream: &'a EventStream, policy: &'a PolicySpec, seed: u64) -> Result<Self> {
        let bandit = BanditState::new(scenario.bandit.clone())?;
        let pool = ReviewPool::new(scenario.scheduler.clone(), Arc::new(ParameterSnapshot::empty()))?;
        let reviewers = scenario.reviewer_capacity.reviewers;
        let n = reviewers.unwrap_or(0);
        Ok(Self {
            scenario,
            stream,
            policy,
            bandit,
            pool,
            index: HashMap::with_capacity(stream.arrivals.len()),
            agenda: Agenda::default(),
            busy: vec![None; n],
            idle: (0..n).collect(),
            unlimited: reviewers.is_none(),
            frozen: None,
            policy_rng: rng_for(seed, POLICY_STREAM),
            round_robin: RoundRobin::default(),
            current: IntervalStats {
                start: 0.0,
                end: 0.0,
                snapshot_id: 0,
                arrivals: 0,
                reviews: 0,
                realized_iv: 0.0,
                pool_depth: 0,
                dispatches: BTreeMap::new(),
                unattributed_dispatches: 0,
                beta_hat: BTreeMap::new(),
            },
            result: SimResult {
                scenario: scenario.name.clone(),
                policy: policy.clone(),
                seed,
                realized_iv: 0.0,
                total_violating_iv: 0.0,
                estimated_realized_iv: 0.0,
                arrivals: 0,
                dispatches: 0,
                reviews: 0,
                removed: 0,
                expired: 0,
                reviewer_hours: 0.0,
                attribution: BTreeMap::new(),
                first_label: BTreeMap::new(),
                registered_at: BTreeMap::new(),
                snapshots: 0,
                intervals: Vec::new(),
            },
        })
    }

    fn run(mut self) -> Result<SimResult> {
        for (i, r) in self.stream.registrations.iter().enumerate() {
            self.agenda.push(r.time, EventKind::Register(i));
        }
        for (i, a) in self.stream.arrivals.iter().enumerate() {
            self.agenda.push(a.time, EventKind::Arrival(i));
        }
        let step = self.scenario.bandit.refresh_interval_hours();
        let ticks = (self.scenario.duration / step + 1e-9).floor() as u64;
        for k in 0..=ticks {
            self.agenda.push(k as f64 * step, EventKind::Tick);
        }

        while let Some(ev) = self.agenda.pop() {
            let now = ev.time;
            if now > self.scenario.duration {
                break;
            }
            match ev.kind {
                EventKind::Register(i) => {
                    let reg = &self.stream.registrations[i];
                    self.bandit.advance_to(now)?;
                    self.bandit.register_model(reg.descriptor.clone())?;
                    self.result.registered_at.insert(reg.descriptor.model_id.clone(), now);
                }
                EventKind::Tick => self.tick(now)?,
                EventKind::Arrival(i) => self.arrive(i, now)?,
                EventKind::View { item, k } => self.view(item, k, now),
                EventKind::Complete { reviewer } => self.complete(reviewer, now)?,
            }
        }
        self.close_interval(self.scenario.duration.max(self.current.start));
        let m = self.pool.metrics();
        self.result.estimated_realized_iv = m.realized_iv;
        self.result.expired = m.expired;
        self.result.removed = m.removed;
        Ok(self.result)
    }

    fn close_interval(&mut self, end: Hours) {
        let beta_hat = self
            .bandit
            .registry()
            .iter()
            .map(|d| {
                let betas = self
                    .bandit
                    .cells(&d.model_id)
                    .unwrap_or_default()
                    .iter()
                    .map(|c| c.beta_hat())
                    .collect();
                (d.model_id.clone(), betas)
            })
            .collect();
        let mut done = IntervalStats {
            end,
            pool_depth: self.pool.len(),
            beta_hat,
            start: self.current.start,
            snapshot_id: self.current.snapshot_id,
            arrivals: 0,
            reviews: 0,
            realized_iv: 0.0,
            dispatches: BTreeMap::new(),
            unattributed_dispatches: 0,
        };
        std::mem::swap(&mut done.arrivals, &mut self.current.arrivals);
        std::mem::swap(&mut done.reviews, &mut self.current.reviews);
        std::mem::swap(&mut done.realized_iv, &mut self.current.realized_iv);
        std::mem::swap(&mut done.dispatches, &mut self.current.dispatches);
        std::mem::swap(&mut done.unattributed_dispatches, &mut self.current.unattributed_dispatches);
        if end > done.start || done.total_dispatches() > 0 || done.arrivals > 0 {
            self.result.intervals.push(done);
        }
        self.current.start = end;
    }

    fn tick(&mut self, now: Hours) -> Result<()> {
        self.bandit.evict_stale(now)?;
        let base = self.bandit.publish_snapshot();
        self.result.snapshots += 1;
        let snapshot = match self.policy {
            PolicySpec::BanditThompson => Arc::new(thompson_snapshot(&base, &mut self.policy_rng)),
            PolicySpec::StaticCalibration => {
                if now >= self.scenario.warmup_hours && self.frozen.is_none() {
                    self.frozen = Some(Arc::new(point_snapshot(&base)));
                }
                self.frozen.clone().unwrap_or_else(|| Arc::new(base))
            }
            _ => Arc::new(base),
        };
        let snapshot_id = snapshot.snapshot_id;
        self.pool.reprice(snapshot, now);
        self.pool.expire(now);
        if now > 0.0 {
            self.close_interval(now);
        }
        self.current.snapshot_id = snapshot_id;
        Ok(())
    }

    fn arrive(&mut self, i: usize, now: Hours) -> Result<()> {
        let a = &self.stream.arrivals[i];
        self.result.arrivals += 1;
        self.current.arrivals += 1;
        if a.severity > 0.0 {
            self.result.total_violating_iv += (a.views_after(now) as f64 + self.additive_constant()) * a.severity;
        }
        self.index.insert(a.content_id.clone(), i);
        self.pool
            .ingest(ContentItem::new(a.content_id.clone(), now, a.scores.clone()), now);
        if let Some(&t) = a.views.first() {
            self.agenda.push(t, EventKind::View { item: i, k: 0 });
        }
        if self.unlimited {
            // every item has its own reviewer and is decided on arrival
            if let Some(item) = self.take_job(usize::MAX, now) {
                self.finish(item, now, 0.0)?;
            }
            return Ok(());
        }
        while let Some(&r) = self.idle.first() {
            if !self.dispatch(r, now) {
                break;
            }
        }
        Ok(())
    }

    fn view(&mut self, item: usize, k: usize, now: Hours) {
        let a = &self.stream.arrivals[item];
        if !self.pool.record_view(&a.content_id, now) && self.pool.get(&a.content_id).is_none() {
            // reviewed or expired: nobody looks at its views any more
            return;
        }
        if let Some(&t) = a.views.get(k + 1) {
            self.agenda.push(t, EventKind::View { item, k: k + 1 });
        }
    }

    fn additive_constant(&self) -> f64 {
        self.scenario.scheduler.iv.additive_constant
    }

    fn take_job(&mut self, reviewer: usize, now: Hours) -> Option<usize> {
        let event = ReviewerEvent {
            reviewer_id: format!("r{reviewer}"),
            available_at: now,
        };
        let velocity_constant = self.scenario.scheduler.velocity_constant;
        let entry = match self.policy {
            PolicySpec::MaxRawScore => self.pool.next_job_by(&event, |e| max_raw_rank(e, velocity_constant)),
            PolicySpec::FixedAllocation { shares } => {
                let model = self.round_robin.next(self.bandit.registry().iter().map(|d| &d.model_id), shares);
                match model {
                    Some(m) => self.pool.next_job_by(&event, |e| {
                        let x = e.content.risk_scores.get(&m).copied().unwrap_or(0.0);
                        Some(x * (e.view_velocity + velocity_constant))
                    }),
                    None => self.pool.next_job(&event),
                }
            }
            _ => self.pool.next_job(&event),
        }?;
        self.result.dispatches += 1;
        match &entry.attribution {
            Some(a) => {
                *self.current.dispatches.entry(a.model_id.clone()).or_default() += 1;
                *self.result.attribution.entry(a.model_id.clone()).or_default() += 1;
            }
            None => self.current.unattributed_dispatches += 1,
        }
        Some(self.index[&entry.content.content_id])
    }

    /// Gives reviewer `r` the next job; false if the pool is empty.
    fn dispatch(&mut self, r: usize, now: Hours) -> bool {
        match self.take_job(r, now) {
            Some(item) => {
                self.idle.remove(&r);
                self.busy[r] = Some(item);
                let done = now + self.stream.arrivals[item].service_hours;
                self.agenda.push(done, EventKind::Complete { reviewer: r });
                true
            }
            None => {
                self.idle.insert(r);
                false
            }
        }
    }

    fn complete(&mut self, reviewer: usize, now: Hours) -> Result<()> {
        let item = self.busy[reviewer].take().expect("completion for a busy reviewer");
        let service = self.stream.arrivals[item].service_hours;
        self.finish(item, now, service)?;
        self.dispatch(reviewer, now);
        Ok(())
    }

    fn finish(&mut self, item: usize, now: Hours, service_hours: f64) -> Result<()> {
        let a = &self.stream.arrivals[item];
        let outcome = self.pool.complete_review(&a.content_id, a.severity, now)?;
        let report = self.bandit.update_with_label(&outcome.example)?;
        for (model, _) in report.updated {
            self.result.first_label.entry(model).or_insert(now);
        }
        let iv = if a.severity > 0.0 {
            (a.views_after(now) as f64 + self.additive_constant()) * a.severity
        } else {
            0.0
        };
        self.result.realized_iv += iv;
        self.result.reviews += 1;
        self.result.reviewer_hours += service_hours;
        self.current.realized_iv += iv;
        self.current.reviews += 1;
        Ok(())
    }
}

/// Runs `policy` on a pre-generated stream.
pub fn run_stream(scenario: &ScenarioConfig, stream: &EventStream, policy: &PolicySpec, seed: u64) -> Result<SimResult> {
    scenario.validate()?;
    Sim::new(scenario, stream, policy, seed)?.run()
}

/// Generates the scenario's stream under `seed` and runs `policy` on it.
pub fn run_seed(scenario: &ScenarioConfig, policy: &PolicySpec, seed: u64) -> Result<SimResult> {
    let stream = generate_stream(scenario, seed)?;
    run_stream(scenario, &stream, policy, seed)
}

/// Runs `policy` with the scenario's own seed.
pub fn run(scenario: &ScenarioConfig, policy: &PolicySpec) -> Result<SimResult> {
    run_seed(scenario, policy, scenario.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{standard_drift, stationary_single_model};

    fn short(mut s: ScenarioConfig, hours: f64) -> ScenarioConfig {
        s.duration = hours;
        s.drift_events.retain(|d| d.time < hours);
        s
    }

    #[test]
    fn event_order_breaks_ties_by_kind_then_sequence() {
        let mut agenda = Agenda::default();
        agenda.push(1.0, EventKind::Arrival(0));
        agenda.push(1.0, EventKind::Tick);
        agenda.push(0.5, EventKind::View { item: 0, k: 0 });
        agenda.push(1.0, EventKind::Arrival(1));
        let order: Vec<EventKind> = std::iter::from_fn(|| agenda.pop()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![
                EventKind::View { item: 0, k: 0 },
                EventKind::Tick,
                EventKind::Arrival(0),
                EventKind::Arrival(1)
            ]
        );
    }

    #[test]
    fn zero_reviewers_realize_nothing() {
        let mut s = short(standard_drift(), 24.0);
        s.reviewer_capacity.reviewers = Some(0);
        let r = run(&s, &PolicySpec::BanditUcb).unwrap();
        assert!(r.arrivals > 0);
        assert_eq!((r.reviews, r.realized_iv), (0, 0.0));
    }

    #[test]
    fn unlimited_reviewers_realize_all_violating_iv() {
        let mut s = short(standard_drift(), 24.0);
        s.reviewer_capacity.reviewers = None;
        let r = run(&s, &PolicySpec::BanditUcb).unwrap();
        assert_eq!(r.reviews, r.arrivals);
        assert!(r.total_violating_iv > 0.0);
        assert_eq!(r.realized_iv, r.total_violating_iv);
    }

    #[test]
    fn runs_are_deterministic() {
        let s = short(standard_drift(), 48.0);
        for p in ["ucb", "thompson", "static", "max-raw", "fixed"] {
            let policy: PolicySpec = p.parse().unwrap();
            assert_eq!(run(&s, &policy).unwrap(), run(&s, &policy).unwrap(), "{p}");
        }
    }

    #[test]
    fn snapshots_follow_refresh_interval() {
        let s = short(standard_drift(), 10.0);
        let r = run(&s, &PolicySpec::BanditUcb).unwrap();
        // ticks at 0, 0.5, ..., 10
        assert_eq!(r.snapshots, 21);
        let step = s.bandit.refresh_interval_hours();
        for i in &r.intervals {
            assert!(i.end - i.start <= step + 1e-12);
        }
    }

    #[test]
    fn every_item_ends_in_one_place() {
        let s = short(standard_drift(), 72.0);
        let r = run(&s, &PolicySpec::BanditUcb).unwrap();
        let pending: usize = r.intervals.last().unwrap().pool_depth;
        let in_review = s.reviewer_capacity.reviewers.unwrap() as u64;
        assert!(r.reviews + r.expired + pending as u64 <= r.arrivals);
        assert!(r.reviews + r.expired + pending as u64 + in_review >= r.arrivals);
    }

    #[test]
    fn noiseless_model_slope_is_learned() {
        // scores are 0.7 * severity, so the calibration coefficient is 1/0.7
        let s = stationary_single_model(0.7);
        let stream = generate_stream(&s, s.seed).unwrap();
        let r = run_stream(&s, &stream, &PolicySpec::BanditUcb, s.seed).unwrap();
        assert!(r.reviews >= 500, "{}", r.reviews);
        let layout = &stream.registrations[0].descriptor.bin_layout;
        let bin = layout.bin_of(0.7 * 2.0).unwrap();
        let beta = r.intervals.last().unwrap().beta_hat[&ModelId::new("m1")][bin];
        let target = 1.0 / 0.7;
        assert!(((beta - target) / target).abs() < 0.05, "{beta}");
    }
}
