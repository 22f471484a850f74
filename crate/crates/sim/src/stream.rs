//! Deterministic synthetic content stream for a scenario.
//!
//! Every random quantity comes from its own ChaCha stream keyed by the seed,
//! so changing, say, the number of models does not move arrival times.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use sevbandit_core::iv::simulate_hawkes;
use sevbandit_core::{
    fit_training_bins, ContentId, HawkesParams, Hours, IntensityState, ModelId, RiskModelDescriptor,
};

use crate::error::Result;
use crate::scenario::{ModelSpec, ScenarioConfig};

const ARRIVAL_STREAM: u64 = 0;
const SCORE_STREAM: u64 = 1;
const VIEW_STREAM: u64 = 2;
const SERVICE_STREAM: u64 = 3;
const BIN_STREAM: u64 = 4;
pub(crate) const POLICY_STREAM: u64 = 5;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub content_id: ContentId,
    pub time: Hours,
    /// Violation type, `None` for benign content.
    pub violation: Option<String>,
    /// True severity; 0 for benign content.
    pub severity: f64,
    /// One score per model live at `time`.
    pub scores: BTreeMap<ModelId, f64>,
    /// Ground-truth view times over the content lifetime.
    pub views: Vec<Hours>,
    /// Time a reviewer spends on this item.
    pub service_hours: f64,
}

impl Arrival {
    /// Views strictly after `t`.
    pub fn views_after(&self, t: Hours) -> usize {
        self.views.len() - self.views.partition_point(|&v| v <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub time: Hours,
    pub descriptor: RiskModelDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    /// Ordered by time.
    pub arrivals: Vec<Arrival>,
    /// Ordered by time; base models first at time 0.
    pub registrations: Vec<Registration>,
}

fn draw_violation<R: Rng>(prevalence: &BTreeMap<String, f64>, rng: &mut R) -> Option<String> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (ty, &p) in prevalence {
        acc += p;
        if u < acc {
            return Some(ty.clone());
        }
    }
    None
}

fn draw_score<R: Rng>(model: &ModelSpec, t: Hours, violation: Option<&str>, severity: f64, rng: &mut R) -> f64 {
    let q = model.quality_at(t);
    let e: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let signal = match violation {
        Some(v) if q.covers.iter().any(|c| c == v) => q.slope * severity,
        _ => 0.0,
    };
    let spurious = if u < q.spurious_rate { q.spurious_score } else { 0.0 };
    signal + spurious + q.noise * e.abs()
}

fn register<R: Rng>(scenario: &ScenarioConfig, model: &ModelSpec, t: Hours, rng: &mut R) -> Result<Registration> {
    let prevalence = scenario.prevalence_at(t);
    let warmup: Vec<f64> = (0..scenario.bin_warmup_samples)
        .map(|_| {
            let v = draw_violation(prevalence, rng);
            let y = v.as_deref().map_or(0.0, |v| scenario.severity_of(v));
            draw_score(model, t, v.as_deref(), y, rng)
        })
        .collect();
    let layout = fit_training_bins(&warmup, scenario.bandit.alpha_quantile, scenario.bandit.bins_per_model)?;
    Ok(Registration {
        time: t,
        descriptor: RiskModelDescriptor {
            model_id: model.id.clone(),
            display_name: model.display_name.clone().unwrap_or_else(|| model.id.to_string()),
            created_at: t,
            bin_layout: layout,
            cold_start_prior: scenario.prior,
        },
    })
}

/// Generates the content stream of `scenario` under `seed`.
pub fn generate_stream(scenario: &ScenarioConfig, seed: u64) -> Result<EventStream> {
    scenario.validate()?;

    let mut bin_rng = rng_for(seed, BIN_STREAM);
    let mut registrations = Vec::new();
    for m in &scenario.models {
        registrations.push(register(scenario, m, 0.0, &mut bin_rng)?);
    }
    let mut injections: Vec<_> = scenario.new_model_injections.iter().collect();
    injections.sort_by(|a, b| a.time.total_cmp(&b.time));
    for inj in &injections {
        registrations.push(register(scenario, &inj.model, inj.time, &mut bin_rng)?);
    }

    let mut arrival_rng = rng_for(seed, ARRIVAL_STREAM);
    let mut score_rng = rng_for(seed, SCORE_STREAM);
    let mut view_rng = rng_for(seed, VIEW_STREAM);
    let mut service_rng = rng_for(seed, SERVICE_STREAM);

    let mut arrivals = Vec::new();
    if scenario.arrival_rate > 0.0 {
        let gap = Exp::new(scenario.arrival_rate).expect("rate checked positive");
        let service = Exp::new(60.0 / scenario.reviewer_capacity.mean_service_minutes).expect("validated");
        let v = &scenario.views;
        let baseline = LogNormal::new(v.baseline_log_mean, v.baseline_log_sd).expect("validated");
        let lifetime = scenario.lifetime();
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut arrival_rng);
            if t >= scenario.duration {
                break;
            }
            let violation = draw_violation(scenario.prevalence_at(t), &mut arrival_rng);
            let severity = violation.as_deref().map_or(0.0, |v| scenario.severity_of(v));

            let live = scenario
                .models
                .iter()
                .chain(injections.iter().filter(|i| i.time <= t).map(|i| &i.model));
            let scores = live
                .map(|m| (m.id.clone(), draw_score(m, t, violation.as_deref(), severity, &mut score_rng)))
                .collect();

            let params = HawkesParams {
                mu: baseline.sample(&mut view_rng),
                excitation: v.excitation,
                omega: v.omega,
            };
            let views = simulate_hawkes(&params, &IntensityState::new(), t, t + lifetime, &mut view_rng);

            arrivals.push(Arrival {
                content_id: ContentId::new(format!("c{:07}", arrivals.len())),
                time: t,
                violation,
                severity,
                scores,
                views,
                service_hours: service.sample(&mut service_rng),
            });
        }
    }
    Ok(EventStream {
        arrivals,
        registrations,
    })
}
