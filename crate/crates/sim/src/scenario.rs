//! Scenario description: what arrives, how well each risk model detects it
//! over time, and how much review capacity there is.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sevbandit_core::{BanditConfig, HawkesParams, Hours, IvConfig, ModelId, OptimisticPrior, SchedulerConfig};

use crate::error::{invalid, Result};

/// Detection quality of a model from `start` until the next segment.
///
/// A content item of a covered violation type with severity `y` scores
/// `slope * y + noise * |e|`, everything else scores `noise * |e|`, with
/// `e` standard normal. On top of that, a fraction `spurious_rate` of all
/// items gets `spurious_score` added: a model whose precision collapsed
/// keeps flagging content at its old confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySegment {
    pub start: Hours,
    pub slope: f64,
    pub noise: f64,
    #[serde(default)]
    pub covers: Vec<String>,
    #[serde(default)]
    pub spurious_rate: f64,
    #[serde(default)]
    pub spurious_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    #[serde(default)]
    pub display_name: Option<String>,
    /// Piecewise-constant quality, ordered by `start`.
    pub schedule: Vec<QualitySegment>,
}

impl ModelSpec {
    pub fn quality_at(&self, t: Hours) -> &QualitySegment {
        let idx = self.schedule.partition_point(|s| s.start <= t);
        &self.schedule[idx.saturating_sub(1)]
    }
}

/// Replaces the violation mix from `time` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub time: Hours,
    pub prevalence: BTreeMap<String, f64>,
}

/// A model that comes online mid-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInjection {
    pub time: Hours,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerCapacity {
    /// `None` means unlimited: every item is reviewed the moment it arrives.
    pub reviewers: Option<usize>,
    /// Mean of the exponential service time.
    pub mean_service_minutes: f64,
}

impl Default for ReviewerCapacity {
    fn default() -> Self {
        Self {
            reviewers: Some(1),
            mean_service_minutes: 2.0,
        }
    }
}

/// Ground-truth reach: each item gets a lognormal baseline intensity and
/// shared self-excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewModel {
    /// Mean of `ln(mu)`.
    pub baseline_log_mean: f64,
    /// Standard deviation of `ln(mu)`.
    pub baseline_log_sd: f64,
    pub excitation: f64,
    pub omega: f64,
}

impl Default for ViewModel {
    fn default() -> Self {
        Self {
            baseline_log_mean: (0.3f64).ln() - 0.5,
            baseline_log_sd: 1.0,
            excitation: 0.5,
            omega: 1.0,
        }
    }
}

impl ViewModel {
    pub fn mean_baseline(&self) -> f64 {
        (self.baseline_log_mean + 0.5 * self.baseline_log_sd * self.baseline_log_sd).exp()
    }

    /// Population-level parameters the scheduler predicts reach with.
    pub fn population_params(&self) -> HawkesParams {
        HawkesParams {
            mu: self.mean_baseline(),
            excitation: self.excitation,
            omega: self.omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Simulated hours.
    pub duration: Hours,
    /// Content per hour (Poisson).
    pub arrival_rate: f64,
    /// The static-calibration policy freezes its coefficients at this time.
    pub warmup_hours: Hours,
    /// Violation mix at time 0: type -> probability. The remainder is benign.
    pub prevalence: BTreeMap<String, f64>,
    #[serde(default)]
    pub drift_events: Vec<DriftEvent>,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub new_model_injections: Vec<ModelInjection>,
    #[serde(default)]
    pub reviewer_capacity: ReviewerCapacity,
    #[serde(default)]
    pub views: ViewModel,
    /// Scores sampled per model to fit its bins at registration.
    #[serde(default = "default_bin_warmup_samples")]
    pub bin_warmup_samples: usize,
    #[serde(default)]
    pub prior: OptimisticPrior,
    #[serde(default)]
    pub bandit: BanditConfig,
    /// Severities come from `scheduler.iv.severity_map`; content lifetime
    /// and view horizon from `scheduler.content_lifetime_max`.
    #[serde(default)]
    pub scheduler: SchedulerConfig,
}

fn default_bin_warmup_samples() -> usize {
    2000
}

impl ScenarioConfig {
    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn lifetime(&self) -> Hours {
        self.scheduler.content_lifetime_max
    }

    pub fn prevalence_at(&self, t: Hours) -> &BTreeMap<String, f64> {
        self.drift_events
            .iter()
            .take_while(|d| d.time <= t)
            .last()
            .map_or(&self.prevalence, |d| &d.prevalence)
    }

    pub fn severity_of(&self, violation: &str) -> f64 {
        self.scheduler.iv.severity_map.get(violation).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.bandit.validate()?;
        self.scheduler.validate()?;
        self.prior.validate()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration must be finite and >= 0"));
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(invalid("arrival_rate must be finite and >= 0"));
        }
        if !(self.warmup_hours >= 0.0) {
            return Err(invalid("warmup_hours must be >= 0"));
        }
        if !(self.reviewer_capacity.mean_service_minutes > 0.0) {
            return Err(invalid("mean_service_minutes must be positive"));
        }
        if self.bin_warmup_samples == 0 {
            return Err(invalid("bin_warmup_samples must be at least 1"));
        }
        let v = &self.views;
        HawkesParams {
            mu: 1.0,
            excitation: v.excitation,
            omega: v.omega,
        }
        .validate()?;
        if !(v.baseline_log_sd >= 0.0 && v.baseline_log_mean.is_finite()) {
            return Err(invalid("view baseline must have finite mean and sd >= 0"));
        }

        self.check_prevalence(&self.prevalence, "initial prevalence")?;
        let mut last = f64::NEG_INFINITY;
        for d in &self.drift_events {
            if !(d.time > last) {
                return Err(invalid("drift events must have strictly increasing times"));
            }
            last = d.time;
            self.check_prevalence(&d.prevalence, &format!("drift at {}", d.time))?;
        }

        let mut ids = std::collections::BTreeSet::new();
        for m in &self.models {
            self.check_schedule(m, 0.0)?;
            if !ids.insert(m.id.clone()) {
                return Err(invalid(format!("model `{}` listed twice", m.id)));
            }
        }
        for inj in &self.new_model_injections {
            if !(inj.time >= 0.0) {
                return Err(invalid(format!("injection of `{}` at negative time", inj.model.id)));
            }
            self.check_schedule(&inj.model, inj.time)?;
            if !ids.insert(inj.model.id.clone()) {
                return Err(invalid(format!("model `{}` listed twice", inj.model.id)));
            }
        }
        Ok(())
    }

    fn check_prevalence(&self, prevalence: &BTreeMap<String, f64>, what: &str) -> Result<()> {
        let mut total = 0.0;
        for (ty, &p) in prevalence {
            if !self.scheduler.iv.severity_map.contains_key(ty) {
                return Err(invalid(format!("{what}: violation type `{ty}` has no severity")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{what}: prevalence of `{ty}` must be in [0, 1]")));
            }
            total += p;
        }
        if total > 1.0 + 1e-12 {
            return Err(invalid(format!("{what}: prevalences sum to {total} > 1")));
        }
        Ok(())
    }

    /// The schedule must start no later than `from` and be ordered.
    fn check_schedule(&self, model: &ModelSpec, from: Hours) -> Result<()> {
        let Some(first) = model.schedule.first() else {
            return Err(invalid(format!("model `{}` has an empty quality schedule", model.id)));
        };
        if first.start > from {
            return Err(invalid(format!(
                "schedule of `{}` starts at {} but the model is live from {from}",
                model.id, first.start
            )));
        }
        for w in model.schedule.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(invalid(format!("schedule of `{}` is not strictly increasing", model.id)));
            }
        }
        for s in &model.schedule {
            if !(s.slope.is_finite() && s.noise >= 0.0 && s.noise.is_finite()) {
                return Err(invalid(format!("schedule of `{}` needs finite slope and noise >= 0", model.id)));
            }
            if !((0.0..=1.0).contains(&s.spurious_rate) && s.spurious_score.is_finite()) {
                return Err(invalid(format!(
                    "schedule of `{}` needs spurious_rate in [0, 1] and a finite spurious_score",
                    model.id
                )));
            }
            if let Some(ty) = s.covers.iter().find(|t| !self.scheduler.iv.severity_map.contains_key(*t)) {
                return Err(invalid(format!("model `{}` covers unknown violation type `{ty}`", model.id)));
            }
        }
        Ok(())
    }
}

fn segment(start: Hours, slope: f64, noise: f64, covers: &[&str]) -> QualitySegment {
    QualitySegment {
        start,
        slope,
        noise,
        covers: covers.iter().map(|s| s.to_string()).collect(),
        spurious_rate: 0.0,
        spurious_score: 0.0,
    }
}

/// A model that lost its signal but still flags `rate` of all content at
/// `score`.
fn collapsed(start: Hours, noise: f64, rate: f64, score: f64) -> QualitySegment {
    QualitySegment {
        spurious_rate: rate,
        spurious_score: score,
        ..segment(start, 0.0, noise, &[])
    }
}

fn model(id: &str, name: &str, schedule: Vec<QualitySegment>) -> ModelSpec {
    ModelSpec {
        id: ModelId::new(id),
        display_name: Some(name.to_string()),
        schedule,
    }
}

fn mix(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn scheduler_for(views: &ViewModel, severities: &[(&str, f64)], lifetime: Hours) -> SchedulerConfig {
    let iv = IvConfig {
        severity_map: mix(severities),
        additive_constant: 10.0,
    };
    SchedulerConfig {
        velocity_constant: iv.additive_constant / lifetime,
        content_lifetime_max: lifetime,
        horizon: lifetime,
        hawkes: views.population_params(),
        iv,
        ..Default::default()
    }
}

/// Six models over 720 hours with three regime switches; two reviewers
/// serving about 10% of arrivals.
///
/// Each switch collapses one specialist model (it loses its signal but keeps
/// flagging a slice of all content at its old score) and hands its violation
/// type to a model that was noise before.
pub fn standard_drift() -> ScenarioConfig {
    let views = ViewModel::default();
    let severities = [("graphic", 6.0), ("hate", 3.0), ("scam", 1.0)];
    let models = vec![
        model("m1", "scam classifier", vec![segment(0.0, 1.0, 0.3, &["scam"]), collapsed(540.0, 0.3, 0.10, 1.5)]),
        model("m2", "hate classifier", vec![segment(0.0, 0.5, 0.3, &["hate"]), collapsed(180.0, 0.3, 0.10, 2.0)]),
        model("m3", "graphic classifier", vec![segment(0.0, 0.25, 0.3, &["graphic"]), collapsed(360.0, 0.3, 0.10, 2.0)]),
        model("m4", "text rules", vec![segment(0.0, 0.0, 0.3, &[]), segment(180.0, 0.5, 0.3, &["hate"])]),
        model("m5", "image hashes", vec![segment(0.0, 0.0, 0.3, &[]), segment(360.0, 0.25, 0.3, &["graphic"])]),
        model("m6", "user reports", vec![segment(0.0, 0.0, 0.3, &[]), segment(540.0, 1.0, 0.3, &["scam"])]),
    ];
    ScenarioConfig {
        name: "standard-drift".into(),
        seed: 1,
        duration: 720.0,
        arrival_rate: 60.0,
        warmup_hours: 72.0,
        prevalence: mix(&[("graphic", 0.03), ("hate", 0.06), ("scam", 0.10)]),
        drift_events: vec![
            DriftEvent {
                time: 180.0,
                prevalence: mix(&[("graphic", 0.03), ("hate", 0.08), ("scam", 0.10)]),
            },
            DriftEvent {
                time: 360.0,
                prevalence: mix(&[("graphic", 0.04), ("hate", 0.06), ("scam", 0.10)]),
            },
            DriftEvent {
                time: 540.0,
                prevalence: mix(&[("graphic", 0.03), ("hate", 0.06), ("scam", 0.12)]),
            },
        ],
        models,
        new_model_injections: Vec::new(),
        reviewer_capacity: ReviewerCapacity {
            reviewers: Some(2),
            mean_service_minutes: 20.0,
        },
        scheduler: scheduler_for(&views, &severities, 48.0),
        views,
        bin_warmup_samples: 2000,
        prior: OptimisticPrior::default(),
        bandit: BanditConfig {
            refresh_interval_minutes: 30.0,
            ..Default::default()
        },
    }
}

/// A new violation type appears at hour 120 together with the only model
/// able to detect it.
pub fn new_model_responsiveness() -> ScenarioConfig {
    let views = ViewModel::default();
    let severities = [("emoji", 5.0), ("hate", 3.0), ("scam", 1.0)];
    let models = vec![
        model("m1", "scam classifier", vec![segment(0.0, 1.0, 0.3, &["scam"])]),
        model("m2", "hate classifier", vec![segment(0.0, 0.5, 0.3, &["hate"])]),
        model("m3", "text rules", vec![segment(0.0, 0.0, 0.3, &[])]),
        model("m4", "image hashes", vec![segment(0.0, 0.0, 0.3, &[])]),
    ];
    ScenarioConfig {
        name: "new-model".into(),
        seed: 1,
        duration: 240.0,
        arrival_rate: 120.0,
        warmup_hours: 48.0,
        prevalence: mix(&[("emoji", 0.0), ("hate", 0.05), ("scam", 0.10)]),
        drift_events: vec![DriftEvent {
            time: 120.0,
            prevalence: mix(&[("emoji", 0.12), ("hate", 0.05), ("scam", 0.10)]),
        }],
        models,
        new_model_injections: vec![ModelInjection {
            time: 120.0,
            model: model("emoji", "emoji football rules", vec![segment(120.0, 0.5, 0.3, &["emoji"])]),
        }],
        reviewer_capacity: ReviewerCapacity {
            reviewers: Some(4),
            mean_service_minutes: 20.0,
        },
        scheduler: scheduler_for(&views, &severities, 24.0),
        views,
        bin_warmup_samples: 2000,
        prior: OptimisticPrior::default(),
        bandit: BanditConfig {
            refresh_interval_minutes: 15.0,
            ..Default::default()
        },
    }
}

/// One noiseless model, one violation type, no drift.
pub fn stationary_single_model(slope: f64) -> ScenarioConfig {
    let views = ViewModel::default();
    let severities = [("scam", 2.0)];
    ScenarioConfig {
        name: "stationary".into(),
        seed: 1,
        duration: 200.0,
        arrival_rate: 30.0,
        warmup_hours: 24.0,
        prevalence: mix(&[("scam", 0.2)]),
        drift_events: Vec::new(),
        models: vec![model("m1", "scam classifier", vec![segment(0.0, slope, 0.0, &["scam"])])],
        new_model_injections: Vec::new(),
        reviewer_capacity: ReviewerCapacity {
            reviewers: Some(2),
            mean_service_minutes: 10.0,
        },
        scheduler: scheduler_for(&views, &severities, 48.0),
        views,
        bin_warmup_samples: 2000,
        prior: OptimisticPrior::default(),
        bandit: BanditConfig {
            refresh_interval_minutes: 30.0,
            ..Default::default()
        },
    }
}

/// Built-in scenario by name.
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "standard-drift" => Some(standard_drift()),
        "new-model" => Some(new_model_responsiveness()),
        "stationary" => Some(stationary_single_model(1.0)),
        _ => None,
    }
}
