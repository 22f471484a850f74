//! Reach prediction with a univariate exponential-kernel Hawkes process and
//! the Integrity Value built on top of it.
//!
//! Conditional intensity:
//!
//! ```text
//! lambda(t) = mu + a * sum_i exp(-omega (t - t_i))
//! ```
//!
//! With `kappa = omega - a > 0`, the expected intensity `m(s)` at `s` hours
//! after `now` solves `m' = (a - omega) m + omega mu`, so
//!
//! ```text
//! m(s)    = m_inf + (lambda(now) - m_inf) e^{-kappa s},   m_inf = mu omega / kappa
//! E[N(H)] = m_inf H + (lambda(now) - m_inf) (1 - e^{-kappa H}) / kappa
//! ```

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ContentId, Hours};

pub const DEFAULT_HORIZON_HOURS: Hours = 168.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Baseline intensity, views per hour.
    pub mu: f64,
    /// Jump in intensity caused by each view.
    pub excitation: f64,
    /// Decay rate of the excitation, per hour.
    pub omega: f64,
}

impl Default for HawkesParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            excitation: 0.5,
            omega: 1.0,
        }
    }
}

impl HawkesParams {
    pub fn branching_ratio(&self) -> f64 {
        self.excitation / self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid("mu", "must be finite and >= 0"));
        }
        if !(self.excitation.is_finite() && self.excitation >= 0.0) {
            return Err(Error::invalid("excitation", "must be finite and >= 0"));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid("omega", "must be finite and > 0"));
        }
        let branching_ratio = self.branching_ratio();
        if branching_ratio >= 1.0 {
            return Err(Error::Supercritical { branching_ratio });
        }
        Ok(())
    }
}

/// Recursive form of the kernel sum, so the intensity can be tracked in O(1)
/// per view event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntensityState {
    last_event: Option<Hours>,
    /// `sum_i exp(-omega (last_event - t_i))`
    kernel_sum: f64,
    count: u64,
}

impl IntensityState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: &[Hours], omega: f64) -> Self {
        let mut s = Self::new();
        for &t in events {
            s.record(t, omega);
        }
        s
    }

    pub fn record(&mut self, t: Hours, omega: f64) {
        match self.last_event {
            Some(last) if t < last => {
                self.kernel_sum += (-omega * (last - t)).exp();
            }
            Some(last) => {
                self.kernel_sum = self.kernel_sum * (-omega * (t - last)).exp() + 1.0;
                self.last_event = Some(t);
            }
            None => {
                self.kernel_sum = 1.0;
                self.last_event = Some(t);
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `sum_i exp(-omega (now - t_i))`; events after `now` are treated as at `now`.
    pub fn kernel_sum_at(&self, now: Hours, omega: f64) -> f64 {
        match self.last_event {
            Some(last) => self.kernel_sum * (-omega * (now - last).max(0.0)).exp(),
            None => 0.0,
        }
    }

    /// Conditional intensity at `now`, views per hour.
    pub fn intensity(&self, params: &HawkesParams, now: Hours) -> f64 {
        params.mu + params.excitation * self.kernel_sum_at(now, params.omega)
    }
}

/// View events observed for one piece of content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewHistory {
    pub content_id: ContentId,
    /// When the content was posted.
    pub origin: Hours,
    /// Nondecreasing view timestamps.
    pub event_times: Vec<Hours>,
    /// Prediction window, hours.
    pub horizon: Hours,
}

impl ViewHistory {
    pub fn new(content_id: ContentId, origin: Hours) -> Self {
        Self {
            content_id,
            origin,
            event_times: Vec::new(),
            horizon: DEFAULT_HORIZON_HOURS,
        }
    }

    /// Observation window `[origin, until]` for likelihood fitting.
    pub fn sample(&self, until: Hours) -> HawkesSample {
        HawkesSample {
            start: self.origin,
            end: until,
            events: self.event_times.iter().copied().filter(|&t| t <= until).collect(),
        }
    }
}

fn kernel_sum_direct(events: &[Hours], now: Hours, omega: f64) -> f64 {
    events
        .iter()
        .filter(|&&t| t <= now)
        .map(|&t| (-omega * (now - t)).exp())
        .sum()
}

/// Conditional expected intensity at `now`: the instantaneous growth rate of
/// predicted cumulative views.
pub fn view_velocity(history: &ViewHistory, params: &HawkesParams, now: Hours) -> Result<f64> {
    params.validate()?;
    Ok(params.mu + params.excitation * kernel_sum_direct(&history.event_times, now, params.omega))
}

/// Expected number of views in `(now, now + horizon]` when the intensity at
/// `now` is `intensity_now`.
pub fn expected_views_from_intensity(intensity_now: f64, params: &HawkesParams, horizon: Hours) -> Result<f64> {
    params.validate()?;
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be >= 0"));
    }
    let kappa = params.omega - params.excitation;
    let stationary = params.mu * params.omega / kappa;
    let transient = -(-kappa * horizon).exp_m1() / kappa;
    Ok((stationary * horizon + (intensity_now - stationary) * transient).max(0.0))
}

/// Expected number of views in `(now, now + horizon]` given the history.
pub fn predict_future_views(
    history: &ViewHistory,
    params: &HawkesParams,
    now: Hours,
    horizon: Hours,
) -> Result<f64> {
    let m0 = view_velocity(history, params, now)?;
    expected_views_from_intensity(m0, params, horizon)
}

/// Severity per violation type and the additive reach constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IvConfig {
    pub severity_map: BTreeMap<String, f64>,
    /// Added to predicted views so that severe content with little reach
    /// still carries value.
    pub additive_constant: f64,
}

impl Default for IvConfig {
    fn default() -> Self {
        Self {
            severity_map: BTreeMap::new(),
            additive_constant: 10.0,
        }
    }
}

impl IvConfig {
    pub fn severity_of(&self, violation_type: &str) -> Result<f64> {
        self.severity_map
            .get(violation_type)
            .copied()
            .ok_or_else(|| Error::invalid("violation_type", format!("`{violation_type}` has no severity")))
    }
}

/// `(predicted_views + additive_constant) * severity`.
pub fn integrity_value(predicted_views: f64, severity: f64, config: &IvConfig) -> Result<f64> {
    if !(predicted_views >= 0.0) {
        return Err(Error::invalid("predicted_views", "must be >= 0"));
    }
    if !(severity >= 0.0) {
        return Err(Error::NegativeSeverity(severity));
    }
    if !(config.additive_constant >= 0.0) {
        return Err(Error::invalid("additive_constant", "must be >= 0"));
    }
    Ok((predicted_views + config.additive_constant) * severity)
}

/// Sum of per-item IV over a set of reviewed content.
pub fn system_integrity_value<I>(reviewed: I, config: &IvConfig) -> Result<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    reviewed
        .into_iter()
        .map(|(views, severity)| integrity_value(views, severity, config))
        .sum()
}

/// Draws Hawkes events on `(start, end]` by thinning, continuing from `state`
/// (which already holds any earlier events).
pub fn simulate_hawkes<R: Rng + ?Sized>(
    params: &HawkesParams,
    state: &IntensityState,
    start: Hours,
    end: Hours,
    rng: &mut R,
) -> Vec<Hours> {
    let mut events = Vec::new();
    let mut t = start;
    let mut excited = params.excitation * state.kernel_sum_at(start, params.omega);
    loop {
        let bound = params.mu + excited;
        if bound <= 0.0 {
            break;
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / bound;
        t += wait;
        if t > end {
            break;
        }
        excited *= (-params.omega * wait).exp();
        if rng.random::<f64>() * bound <= params.mu + excited {
            events.push(t);
            excited += params.excitation;
        }
    }
    events
}

/// One observation window for likelihood fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesSample {
    pub start: Hours,
    pub end: Hours,
    pub events: Vec<Hours>,
}

impl HawkesSample {
    fn duration(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }
}

/// Exponential-kernel Hawkes log-likelihood summed over samples.
pub fn log_likelihood(samples: &[HawkesSample], params: &HawkesParams) -> f64 {
    let HawkesParams { mu, excitation: a, omega } = *params;
    let mut ll = 0.0;
    for s in samples {
        let mut recur = 0.0;
        let mut prev: Option<f64> = None;
        for &t in &s.events {
            if let Some(p) = prev {
                recur = (-omega * (t - p)).exp() * (1.0 + recur);
            }
            prev = Some(t);
            ll += (mu + a * recur).ln();
            ll -= a / omega * (1.0 - (-omega * (s.end - t)).exp());
        }
        ll -= mu * s.duration();
    }
    ll
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesFit {
    pub params: HawkesParams,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
}

const OMEGA_DEFAULT: f64 = 1.0;
const MAX_BRANCHING: f64 = 0.99;

/// Per-omega quantities that do not depend on `mu` or `a`.
struct OmegaTerms {
    /// `sum_{j<i} exp(-omega (t_i - t_j))` per event
    recur: Vec<f64>,
    /// `sum_i (1 - exp(-omega (T - t_i))) / omega`
    compensator: f64,
}

fn omega_terms(samples: &[HawkesSample], omega: f64) -> OmegaTerms {
    let mut recur = Vec::new();
    let mut compensator = 0.0;
    for s in samples {
        let mut r = 0.0;
        let mut prev: Option<f64> = None;
        for &t in &s.events {
            if let Some(p) = prev {
                r = (-omega * (t - p)).exp() * (1.0 + r);
            }
            prev = Some(t);
            recur.push(r);
            compensator += (1.0 - (-omega * (s.end - t)).exp()) / omega;
        }
    }
    OmegaTerms { recur, compensator }
}

/// Expectation-maximization over (mu, a) with omega held fixed. Each step
/// does not decrease the likelihood.
fn em_fixed_omega(terms: &OmegaTerms, total_time: f64, omega: f64, mut mu: f64, mut a: f64) -> (f64, f64, f64) {
    for _ in 0..1000 {
        let (mut bg, mut trig) = (0.0, 0.0);
        for &r in &terms.recur {
            let lambda = mu + a * r;
            bg += mu / lambda;
            trig += a * r / lambda;
        }
        let mu_next = bg / total_time;
        let a_next = if terms.compensator > 0.0 {
            (trig / terms.compensator).min(MAX_BRANCHING * omega)
        } else {
            0.0
        };
        let change = (mu_next - mu).abs() / mu.max(1e-12) + (a_next - a).abs() / a.max(1e-12).max(0.01 * omega);
        mu = mu_next;
        a = a_next;
        if change < 1e-10 {
            break;
        }
    }
    let ll: f64 = terms.recur.iter().map(|&r| (mu + a * r).ln()).sum::<f64>() - mu * total_time - a * terms.compensator;
    (mu, a, ll)
}

/// Maximum-likelihood exponential-kernel Hawkes parameters pooled over all
/// samples. `omega` is profiled out on a log grid refined by golden-section
/// search; `(mu, a)` are fitted by EM for each candidate `omega`.
pub fn fit_hawkes(samples: &[HawkesSample]) -> Result<HawkesFit> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("histories"));
    }
    let total_time: f64 = samples.iter().map(HawkesSample::duration).sum();
    let n_events: usize = samples.iter().map(|s| s.events.len()).sum();
    if n_events == 0 || total_time <= 0.0 {
        let params = HawkesParams {
            mu: 0.0,
            excitation: 0.0,
            omega: OMEGA_DEFAULT,
        };
        return Ok(HawkesFit {
            params,
            log_likelihood: 0.0,
            initial_log_likelihood: 0.0,
        });
    }

    let mu0 = n_events as f64 / total_time;
    let initial = HawkesParams {
        mu: mu0 * 0.5,
        excitation: 0.5 * OMEGA_DEFAULT,
        omega: OMEGA_DEFAULT,
    };
    let initial_ll = log_likelihood(samples, &initial);

    let profile = |log_omega: f64| -> (f64, f64, f64) {
        let omega = log_omega.exp();
        let terms = omega_terms(samples, omega);
        let (mu, a, ll) = em_fixed_omega(&terms, total_time, omega, mu0 * 0.5, 0.5 * omega * MAX_BRANCHING);
        (mu, a, ll)
    };

    // coarse log grid over omega in [1e-3, 1e3]
    let grid: Vec<f64> = (0..=24).map(|i| (1e-3f64).ln() + i as f64 * (1e6f64).ln() / 24.0).collect();
    let values: Vec<f64> = grid.iter().map(|&g| profile(g).2).collect();
    let best = (0..grid.len())
        .max_by(|&i, &j| values[i].total_cmp(&values[j]))
        .expect("grid is non-empty");
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = profile(x1).2;
    let mut f2 = profile(x2).2;
    for _ in 0..40 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = profile(x2).2;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = profile(x1).2;
        }
    }
    let log_omega = if f1 >= f2 { x1 } else { x2 };
    let (mu, a, ll) = profile(log_omega);
    let fitted = HawkesParams {
        mu,
        excitation: a,
        omega: log_omega.exp(),
    };
    let fitted_ll = log_likelihood(samples, &fitted);
    debug_assert!((fitted_ll - ll).abs() <= 1e-6 * ll.abs().max(1.0));

    let (params, log_likelihood) = if fitted_ll >= initial_ll {
        (fitted, fitted_ll)
    } else {
        (initial, initial_ll)
    };
    Ok(HawkesFit {
        params,
        log_likelihood,
        initial_log_likelihood: initial_ll,
    })
}
