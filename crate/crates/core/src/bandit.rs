//! Discounted, windowed per-(model, bin) least squares with UCB bonuses.
//!
//! Every cell regresses severity on the raw score of its model, restricted to
//! scores falling in the cell's bin, through the origin:
//!
//! ```text
//! beta_hat = XY / XX
//! sigma^2  = sum w^2 (y - beta_hat x)^2 / sum w
//! u        = sigma * sqrt(ln(1/delta) / XX)
//! ```
//!
//! where `w = gamma^(now - t)` and sums run over the in-window examples of
//! the cell. All sums are maintained incrementally; the per-cell sample ring
//! is only replayed when examples leave the window.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::calibration::calibrate_piecewise;
use crate::error::{Error, Result};
use crate::registry::{
    BinLayout, OptimisticPrior, Registry, RegistryVersion, RiskModelDescriptor, DEFAULT_BINS,
};
use crate::types::{ContentId, Hours, ModelId};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// How the per-cell noise scale is maintained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// Residual sum of squares from the sufficient statistics
    /// (`RSS = YY - 2 beta XY + beta^2 XX`, which is `YY - beta^2 XX` for
    /// unit weights). Matches batch recomputation.
    #[default]
    Rss,
    /// The literal recursion
    /// `s'^2 = (N/N') (s^2 + y^2 + beta^2 XX - beta'^2 XX')`.
    /// Kept for comparison only; it does not track the batch residual.
    LiteralRecursion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanditConfig {
    /// Confidence level of the upper bound, fixed over time.
    pub delta: f64,
    /// Per-hour discount factor applied to older examples.
    pub gamma: f64,
    /// Examples at least this old (hours) are removed. `None` keeps everything.
    pub tau_max: Option<f64>,
    /// Cadence of snapshot publication.
    pub refresh_interval_minutes: f64,
    /// Fraction of the warm-up sample (by score magnitude) that bins are fitted on.
    pub alpha_quantile: f64,
    pub sigma_floor: f64,
    pub bins_per_model: usize,
    /// Examples retained per cell for exact eviction.
    pub ring_capacity: usize,
    pub sigma_mode: SigmaMode,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            gamma: 0.995,
            tau_max: Some(720.0),
            refresh_interval_minutes: 5.0,
            alpha_quantile: 0.25,
            sigma_floor: 1e-6,
            bins_per_model: DEFAULT_BINS,
            ring_capacity: 4096,
            sigma_mode: SigmaMode::Rss,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", "must be in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", "must be in (0, 1]"));
        }
        if let Some(t) = self.tau_max {
            if !(t > 0.0) {
                return Err(Error::invalid("tau_max", "must be positive"));
            }
        }
        if !(self.refresh_interval_minutes > 0.0 && self.refresh_interval_minutes.is_finite()) {
            return Err(Error::invalid("refresh_interval_minutes", "must be positive"));
        }
        if !(self.alpha_quantile > 0.0 && self.alpha_quantile <= 1.0) {
            return Err(Error::invalid("alpha_quantile", "must be in (0, 1]"));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::invalid("sigma_floor", "must be positive"));
        }
        if self.bins_per_model == 0 {
            return Err(Error::invalid("bins_per_model", "must be at least 1"));
        }
        if self.ring_capacity == 0 {
            return Err(Error::invalid("ring_capacity", "must be at least 1"));
        }
        Ok(())
    }

    pub fn refresh_interval_hours(&self) -> Hours {
        self.refresh_interval_minutes / 60.0
    }

    fn weight(&self, age: Hours) -> f64 {
        if self.gamma == 1.0 || age <= 0.0 {
            1.0
        } else {
            self.gamma.powf(age)
        }
    }
}

/// `sigma * sqrt(ln(1/delta) / xx)`.
pub fn compute_ucb(sigma: f64, xx: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must be in (0, 1), got {delta}")));
    }
    if !(xx > 0.0) {
        return Err(Error::invalid("xx", "must be positive"));
    }
    Ok(sigma * ((1.0 / delta).ln() / xx).sqrt())
}

/// Weighted sufficient statistics. First-order sums use weight `w`, the
/// residual sums use `w^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Moments {
    xx: f64,
    xy: f64,
    yy: f64,
    n: f64,
    xx2: f64,
    xy2: f64,
    yy2: f64,
}

impl Moments {
    fn add(&mut self, x: f64, y: f64, w: f64) {
        let w2 = w * w;
        self.xx += w * x * x;
        self.xy += w * x * y;
        self.yy += w * y * y;
        self.n += w;
        self.xx2 += w2 * x * x;
        self.xy2 += w2 * x * y;
        self.yy2 += w2 * y * y;
    }

    fn scale(&mut self, g: f64) {
        let g2 = g * g;
        self.xx *= g;
        self.xy *= g;
        self.yy *= g;
        self.n *= g;
        self.xx2 *= g2;
        self.xy2 *= g2;
        self.yy2 *= g2;
    }
}

/// One labeled (score, severity) pair held by a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub t: Hours,
}

/// Sufficient statistics and current estimates for one (model, bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCell {
    stats: Moments,
    ring: VecDeque<Sample>,
    // Samples pushed out of a full ring; only removable as a block.
    overflow: Moments,
    overflow_newest: Option<Hours>,
    prior: OptimisticPrior,
    prior_decay: f64,
    literal_sigma_sq: f64,
    beta_hat: f64,
    sigma: f64,
    ucb_bonus: f64,
    last_update: Hours,
}

impl CalibrationCell {
    pub fn new(prior: OptimisticPrior, now: Hours) -> Self {
        Self {
            stats: Moments::default(),
            ring: VecDeque::new(),
            overflow: Moments::default(),
            overflow_newest: None,
            prior,
            prior_decay: 1.0,
            literal_sigma_sq: 0.0,
            beta_hat: prior.prior_beta,
            sigma: prior.prior_uncertainty,
            ucb_bonus: prior.prior_uncertainty,
            last_update: now,
        }
    }

    pub fn xx(&self) -> f64 {
        self.stats.xx
    }
    pub fn xy(&self) -> f64 {
        self.stats.xy
    }
    pub fn yy(&self) -> f64 {
        self.stats.yy
    }
    pub fn n_eff(&self) -> f64 {
        self.stats.n
    }
    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn ucb_bonus(&self) -> f64 {
        self.ucb_bonus
    }
    pub fn last_update(&self) -> Hours {
        self.last_update
    }
    pub fn prior(&self) -> &OptimisticPrior {
        &self.prior
    }
    /// Examples still individually held for eviction, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.ring.iter()
    }

    /// True while the cell has no data and reports its cold-start prior.
    pub fn is_cold(&self) -> bool {
        !(self.stats.xx > 0.0)
    }

    /// Weighted residual sum of squares of the current fit.
    pub fn residual_sum_of_squares(&self) -> f64 {
        if self.is_cold() {
            return 0.0;
        }
        let b = self.stats.xy / self.stats.xx;
        (self.stats.yy2 - 2.0 * b * self.stats.xy2 + b * b * self.stats.xx2).max(0.0)
    }

    /// Noise scale of the current fit, floored at `sigma_floor`. Falls back
    /// to the prior scale when the cell holds no mass at all.
    pub fn compute_sigma(&self, config: &BanditConfig) -> f64 {
        let prior_n = self.prior.prior_weight * self.prior_decay;
        let denom = self.stats.n + prior_n;
        if !(denom > 0.0) {
            return self.prior.prior_uncertainty;
        }
        let var = match config.sigma_mode {
            SigmaMode::Rss => {
                let s0 = self.prior.prior_uncertainty;
                let prior_rss = self.prior.prior_weight * s0 * s0 * self.prior_decay * self.prior_decay;
                (self.residual_sum_of_squares() + prior_rss) / denom
            }
            SigmaMode::LiteralRecursion => self.literal_sigma_sq,
        };
        var.max(0.0).sqrt().max(config.sigma_floor)
    }

    fn refresh(&mut self, config: &BanditConfig) {
        if self.is_cold() {
            self.beta_hat = self.prior.prior_beta;
            self.sigma = self.compute_sigma(config);
            self.ucb_bonus = self.prior.prior_uncertainty;
        } else {
            self.beta_hat = self.stats.xy / self.stats.xx;
            self.sigma = self.compute_sigma(config);
            self.ucb_bonus = self.sigma * ((1.0 / config.delta).ln() / self.stats.xx).sqrt();
        }
    }

    fn data_beta(&self) -> f64 {
        if self.is_cold() {
            0.0
        } else {
            self.stats.xy / self.stats.xx
        }
    }

    fn accumulate(&mut self, x: f64, y: f64, w: f64) {
        let (n0, xx0, b0) = (self.stats.n, self.stats.xx, self.data_beta());
        self.stats.add(x, y, w);
        let (n1, xx1, b1) = (self.stats.n, self.stats.xx, self.data_beta());
        if n1 > 0.0 {
            let ratio = if n0 > 0.0 { n0 / n1 } else { 0.0 };
            self.literal_sigma_sq =
                ratio * (self.literal_sigma_sq + w * y * y + b0 * b0 * xx0 - b1 * b1 * xx1);
        }
    }

    fn add(&mut self, sample: Sample, now: Hours, config: &BanditConfig) {
        let w = config.weight(now - sample.t);
        self.accumulate(sample.x, sample.y, w);
        let pos = self
            .ring
            .iter()
            .rposition(|s| s.t <= sample.t)
            .map_or(0, |p| p + 1);
        self.ring.insert(pos, sample);
        while self.ring.len() > config.ring_capacity {
            let old = self.ring.pop_front().expect("ring is non-empty");
            self.overflow.add(old.x, old.y, config.weight(now - old.t));
            self.overflow_newest = Some(self.overflow_newest.map_or(old.t, |t| t.max(old.t)));
        }
        self.last_update = now;
        self.refresh(config);
    }

    fn discount(&mut self, g: f64, config: &BanditConfig) {
        self.stats.scale(g);
        self.overflow.scale(g);
        self.prior_decay *= g;
        self.refresh(config);
    }

    fn evict(&mut self, now: Hours, tau_max: Hours, config: &BanditConfig) -> usize {
        let mut removed = 0;
        while self.ring.front().is_some_and(|s| now - s.t >= tau_max) {
            self.ring.pop_front();
            removed += 1;
        }
        if self.overflow_newest.is_some_and(|t| now - t >= tau_max) {
            self.overflow = Moments::default();
            self.overflow_newest = None;
            removed += 1;
        }
        if removed > 0 {
            self.rebuild(now, config);
        }
        removed
    }

    /// Recomputes the sums from the retained samples.
    fn rebuild(&mut self, now: Hours, config: &BanditConfig) {
        self.stats = self.overflow;
        self.literal_sigma_sq = 0.0;
        let ring = std::mem::take(&mut self.ring);
        for s in &ring {
            self.accumulate(s.x, s.y, config.weight(now - s.t));
        }
        self.ring = ring;
        self.last_update = now;
        self.refresh(config);
    }

    fn snapshot(&self) -> CellSnapshot {
        CellSnapshot {
            beta_hat: self.beta_hat,
            ucb_bonus: self.ucb_bonus,
            optimistic: self.beta_hat + self.ucb_bonus,
            sigma: self.sigma,
            n_eff: self.stats.n,
            xx: self.stats.xx,
        }
    }
}

/// A reviewed piece of content. Exists only for content that was reviewed;
/// `severity == 0` means reviewed and not violating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub content_id: ContentId,
    pub scores: BTreeMap<ModelId, f64>,
    pub severity: f64,
    pub label_time: Hours,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    /// (model, bin) cells that absorbed the example.
    pub updated: Vec<(ModelId, usize)>,
    /// Scores for models that are not registered.
    pub skipped_unknown: Vec<ModelId>,
    /// Registered models whose score fell outside every bin.
    pub out_of_bin: Vec<ModelId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelCells {
    layout: BinLayout,
    cells: Vec<CalibrationCell>,
}

/// Single-writer learning state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    config: BanditConfig,
    registry: Registry,
    models: BTreeMap<ModelId, ModelCells>,
    now: Hours,
    next_snapshot_id: u64,
}

impl BanditState {
    pub fn new(config: BanditConfig) -> Result<Self> {
        Self::starting_at(config, 0.0)
    }

    pub fn starting_at(config: BanditConfig, now: Hours) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            registry: Registry::new(),
            models: BTreeMap::new(),
            now,
            next_snapshot_id: 1,
        })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn now(&self) -> Hours {
        self.now
    }

    pub fn cells(&self, model: &ModelId) -> Option<&[CalibrationCell]> {
        self.models.get(model).map(|m| m.cells.as_slice())
    }

    pub fn cell(&self, model: &ModelId, bin: usize) -> Option<&CalibrationCell> {
        self.cells(model).and_then(|c| c.get(bin))
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (&ModelId, usize, &CalibrationCell)> {
        self.models
            .iter()
            .flat_map(|(id, m)| m.cells.iter().enumerate().map(move |(j, c)| (id, j, c)))
    }

    /// Adds a model. Its cells start from the cold-start prior and become
    /// visible to scoring at the next snapshot.
    pub fn register_model(&mut self, descriptor: RiskModelDescriptor) -> Result<RegistryVersion> {
        let id = descriptor.model_id.clone();
        let layout = descriptor.bin_layout.clone();
        let prior = descriptor.cold_start_prior;
        let version = self.registry.register(descriptor)?;
        let mut cells: Vec<CalibrationCell> = (0..layout.bin_count())
            .map(|_| CalibrationCell::new(prior, self.now))
            .collect();
        for c in &mut cells {
            c.refresh(&self.config);
        }
        self.models.insert(id, ModelCells { layout, cells });
        Ok(version)
    }

    /// Moves the clock forward by `elapsed_hours`, discounting every cell.
    pub fn apply_discount(&mut self, elapsed_hours: Hours) -> Result<()> {
        if !(elapsed_hours >= 0.0) || !elapsed_hours.is_finite() {
            return Err(Error::invalid("elapsed_hours", "must be finite and >= 0"));
        }
        if elapsed_hours == 0.0 {
            return Ok(());
        }
        self.now += elapsed_hours;
        if self.config.gamma < 1.0 {
            let g = self.config.gamma.powf(elapsed_hours);
            for m in self.models.values_mut() {
                for c in &mut m.cells {
                    c.discount(g, &self.config);
                }
            }
        }
        Ok(())
    }

    /// Discounts up to `t`; a `t` in the past is a no-op.
    pub fn advance_to(&mut self, t: Hours) -> Result<()> {
        if t > self.now {
            self.apply_discount(t - self.now)
        } else {
            Ok(())
        }
    }

    /// Absorbs one label into every cell whose bin holds the example's score.
    pub fn update_with_label(&mut self, example: &LabeledExample) -> Result<UpdateReport> {
        let y = example.severity;
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::NegativeSeverity(y));
        }
        self.advance_to(example.label_time)?;
        let now = self.now;
        let mut report = UpdateReport::default();
        for (model, &x) in &example.scores {
            let Some(m) = self.models.get_mut(model) else {
                warn!(model = %model, content = %example.content_id, "label carries score for unknown model");
                report.skipped_unknown.push(model.clone());
                continue;
            };
            let Some(j) = m.layout.bin_of(x) else {
                report.out_of_bin.push(model.clone());
                continue;
            };
            let sample = Sample {
                x,
                y,
                t: example.label_time.min(now),
            };
            m.cells[j].add(sample, now, &self.config);
            report.updated.push((model.clone(), j));
        }
        Ok(report)
    }

    /// Removes examples that are `tau_max` hours old or older at `now`.
    /// Returns the number of samples removed.
    pub fn evict_stale(&mut self, now: Hours) -> Result<usize> {
        self.advance_to(now)?;
        let Some(tau_max) = self.config.tau_max else {
            return Ok(0);
        };
        let now = self.now;
        let mut removed = 0;
        for m in self.models.values_mut() {
            for c in &mut m.cells {
                removed += c.evict(now, tau_max, &self.config);
            }
        }
        Ok(removed)
    }

    /// Publishes the current estimates as an immutable snapshot.
    pub fn publish_snapshot(&mut self) -> ParameterSnapshot {
        let id = self.next_snapshot_id;
        self.next_snapshot_id += 1;
        let models = self
            .models
            .iter()
            .map(|(mid, m)| {
                let display_name = self
                    .registry
                    .get(mid)
                    .map(|d| d.display_name.clone())
                    .unwrap_or_default();
                let snap = ModelSnapshot {
                    display_name,
                    bin_layout: m.layout.clone(),
                    cells: m.cells.iter().map(CalibrationCell::snapshot).collect(),
                };
                (mid.clone(), Arc::new(snap))
            })
            .collect();
        ParameterSnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            snapshot_id: id,
            registry_version: self.registry.version(),
            created_at: self.now,
            models,
        }
    }
}

/// Published estimates of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub beta_hat: f64,
    pub ucb_bonus: f64,
    /// Coefficient used for optimistic scoring; `beta_hat + ucb_bonus` unless
    /// the snapshot was derived by a comparison policy.
    pub optimistic: f64,
    pub sigma: f64,
    pub n_eff: f64,
    pub xx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub display_name: String,
    pub bin_layout: BinLayout,
    pub cells: Vec<CellSnapshot>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// `beta_hat + u`
    #[default]
    Optimistic,
    /// `beta_hat` alone
    Point,
}

/// The (model, bin) that produced the maximum calibrated score.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attribution {
    pub model_id: ModelId,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityEstimate {
    pub value: f64,
    pub attribution: Option<Attribution>,
}

/// Immutable view of all calibration coefficients between refreshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSnapshot {
    pub format_version: u32,
    pub snapshot_id: u64,
    pub registry_version: RegistryVersion,
    pub created_at: Hours,
    models: BTreeMap<ModelId, Arc<ModelSnapshot>>,
}

impl ParameterSnapshot {
    /// Snapshot with no models, used before anything is published.
    pub fn empty() -> Self {
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            snapshot_id: 0,
            registry_version: RegistryVersion::default(),
            created_at: 0.0,
            models: BTreeMap::new(),
        }
    }

    pub fn models(&self) -> &BTreeMap<ModelId, Arc<ModelSnapshot>> {
        &self.models
    }

    pub fn model(&self, id: &ModelId) -> Option<&ModelSnapshot> {
        self.models.get(id).map(|m| m.as_ref())
    }

    /// Calibrated contribution of one model's score under `mode`, with its bin.
    pub fn contribution(&self, model: &ModelId, z: f64, mode: ScoreMode) -> Option<(f64, usize)> {
        let m = self.models.get(model)?;
        let bin = m.bin_layout.bin_of(z)?;
        let coef = match mode {
            ScoreMode::Optimistic => m.cells[bin].optimistic,
            ScoreMode::Point => m.cells[bin].beta_hat,
        };
        Some((coef * z, bin))
    }

    /// Maximum calibrated score over the models present in `scores`.
    ///
    /// Scores outside every bin, or for models missing from the snapshot,
    /// contribute nothing. Ties go to the smallest model id.
    pub fn severity(&self, scores: &BTreeMap<ModelId, f64>, mode: ScoreMode) -> SeverityEstimate {
        // Both maps are sorted by model id, so walk them together.
        let mut best: Option<(f64, &ModelId, usize)> = None;
        let mut models = self.models.iter().peekable();
        for (model, &z) in scores {
            while models.next_if(|(id, _)| *id < model).is_some() {}
            let Some((_, m)) = models.next_if(|(id, _)| *id == model) else {
                continue;
            };
            let Some(bin) = m.bin_layout.bin_of(z) else {
                continue;
            };
            let coef = match mode {
                ScoreMode::Optimistic => m.cells[bin].optimistic,
                ScoreMode::Point => m.cells[bin].beta_hat,
            };
            let value = coef * z;
            if best.is_none_or(|(v, _, _)| value > v) {
                best = Some((value, model, bin));
            }
        }
        match best {
            Some((value, model, bin)) => SeverityEstimate {
                value,
                attribution: Some(Attribution {
                    model_id: model.clone(),
                    bin,
                }),
            },
            None => SeverityEstimate {
                value: 0.0,
                attribution: None,
            },
        }
    }

    pub fn optimistic_severity(&self, scores: &BTreeMap<ModelId, f64>) -> SeverityEstimate {
        self.severity(scores, ScoreMode::Optimistic)
    }

    /// The isolated review decision `1(y_hat > 0)`.
    pub fn should_review(&self, scores: &BTreeMap<ModelId, f64>) -> bool {
        self.optimistic_severity(scores).value > 0.0
    }

    /// Copy with every optimistic coefficient replaced by `f(model, bin, cell)`.
    pub fn with_coefficients(
        &self,
        mut f: impl FnMut(&ModelId, usize, &CellSnapshot) -> f64,
    ) -> ParameterSnapshot {
        let models = self
            .models
            .iter()
            .map(|(id, m)| {
                let cells = m
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(j, c)| CellSnapshot {
                        optimistic: f(id, j, c),
                        ..*c
                    })
                    .collect();
                let snap = ModelSnapshot {
                    display_name: m.display_name.clone(),
                    bin_layout: m.bin_layout.clone(),
                    cells,
                };
                (id.clone(), Arc::new(snap))
            })
            .collect();
        ParameterSnapshot {
            models,
            ..self.clone()
        }
    }

    /// Piecewise-linear value of one model's score under arbitrary coefficients.
    pub fn calibrate_with(&self, model: &ModelId, coefficients: &[f64], z: f64) -> Result<f64> {
        let m = self
            .models
            .get(model)
            .ok_or_else(|| Error::UnknownModel(model.clone()))?;
        if coefficients.len() != m.bin_layout.bin_count() {
            return Err(Error::invalid("coefficients", "length must equal the bin count"));
        }
        Ok(calibrate_piecewise(&m.bin_layout, coefficients, z))
    }
}
