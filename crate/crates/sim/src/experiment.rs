//! Multi-seed experiments: paired A/B lift, hyperparameter grid search and
//! capacity sweeps. Seeds run in parallel; each run is single-threaded and
//! deterministic.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::policy::PolicySpec;
use crate::run::{run_seed, SimResult};
use crate::scenario::ScenarioConfig;
use crate::stream::rng_for;

const BOOTSTRAP_RESAMPLES: usize = 10_000;
const BOOTSTRAP_STREAM: u64 = 17;

/// Seeds `scenario.seed, scenario.seed + 1, ...`.
pub fn seeds(scenario: &ScenarioConfig, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| scenario.seed.wrapping_add(i)).collect()
}

/// Runs every (policy, seed) pair in parallel.
pub fn run_many(scenario: &ScenarioConfig, policies: &[PolicySpec], seeds: &[u64]) -> Result<Vec<Vec<SimResult>>> {
    scenario.validate()?;
    let jobs: Vec<(usize, u64)> = (0..policies.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let mut results: Vec<(usize, SimResult)> = jobs
        .par_iter()
        .map(|&(p, s)| run_seed(scenario, &policies[p], s).map(|r| (p, r)))
        .collect::<Result<_>>()?;
    let mut by_policy = vec![Vec::with_capacity(seeds.len()); policies.len()];
    // par_iter preserves order, so each policy's results stay in seed order
    for (p, r) in results.drain(..) {
        by_policy[p].push(r);
    }
    Ok(by_policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftEstimate {
    pub policy_a: PolicySpec,
    pub policy_b: PolicySpec,
    pub seeds: Vec<u64>,
    pub iv_a: Vec<f64>,
    pub iv_b: Vec<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b / mean_a - 1`.
    pub lift: f64,
    /// Percentile bootstrap 95% interval over resampled seed pairs.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Seeds on which `b` realized at least as much IV as `a`.
    pub b_at_least_a: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Ratio-of-means lift of `b` over `a` on paired per-seed outcomes, with a
/// percentile bootstrap 95% interval. `bootstrap_seed` fixes the resampling.
pub fn paired_lift(iv_a: &[f64], iv_b: &[f64], bootstrap_seed: u64) -> Result<(f64, f64, f64)> {
    assert_eq!(iv_a.len(), iv_b.len(), "outcomes must be paired");
    let n = iv_a.len();
    if n < 2 {
        return Err(SimError::TooFewSeeds(n));
    }
    let mean_a = mean(iv_a);
    if !(mean_a > 0.0) {
        return Err(SimError::ZeroBaseline);
    }
    let lift = mean(iv_b) / mean_a - 1.0;
    let mut rng = rng_for(bootstrap_seed, BOOTSTRAP_STREAM);
    let mut lifts: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .filter_map(|_| {
            let (mut sa, mut sb) = (0.0, 0.0);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                sa += iv_a[i];
                sb += iv_b[i];
            }
            (sa > 0.0).then(|| sb / sa - 1.0)
        })
        .collect();
    lifts.sort_by(f64::total_cmp);
    Ok((lift, percentile(&lifts, 0.025), percentile(&lifts, 0.975)))
}

/// Paired-seed comparison of two policies on the same streams.
pub fn ab_compare(scenario: &ScenarioConfig, a: &PolicySpec, b: &PolicySpec, n_seeds: usize) -> Result<LiftEstimate> {
    if n_seeds < 2 {
        return Err(SimError::TooFewSeeds(n_seeds));
    }
    let seeds = seeds(scenario, n_seeds);
    let runs = run_many(scenario, &[a.clone(), b.clone()], &seeds)?;
    let iv_a: Vec<f64> = runs[0].iter().map(|r| r.realized_iv).collect();
    let iv_b: Vec<f64> = runs[1].iter().map(|r| r.realized_iv).collect();
    let (lift, ci_low, ci_high) = paired_lift(&iv_a, &iv_b, scenario.seed)?;
    Ok(LiftEstimate {
        policy_a: a.clone(),
        policy_b: b.clone(),
        b_at_least_a: iv_a.iter().zip(&iv_b).filter(|(a, b)| b >= a).count(),
        mean_a: mean(&iv_a),
        mean_b: mean(&iv_b),
        seeds,
        iv_a,
        iv_b,
        lift,
        ci_low,
        ci_high,
    })
}

/// Axes of a tuning grid; an omitted axis keeps the scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneGrid {
    pub delta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub alpha_quantile: Option<Vec<f64>>,
    pub bins_per_model: Option<Vec<usize>>,
    /// Seeds per configuration.
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub delta: f64,
    pub gamma: f64,
    pub alpha_quantile: f64,
    pub bins_per_model: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub cell: TuneCell,
    pub mean_iv: f64,
    pub std_iv: f64,
    pub iv: Vec<f64>,
}

fn axis<T: Copy>(values: &Option<Vec<T>>, default: T, name: &'static str) -> Result<Vec<T>> {
    match values {
        None => Ok(vec![default]),
        Some(v) if v.is_empty() => Err(SimError::EmptyGrid(name)),
        Some(v) => Ok(v.clone()),
    }
}

impl TuneGrid {
    pub fn cells(&self, scenario: &ScenarioConfig) -> Result<Vec<TuneCell>> {
        let b = &scenario.bandit;
        let deltas = axis(&self.delta, b.delta, "delta")?;
        let gammas = axis(&self.gamma, b.gamma, "gamma")?;
        let alphas = axis(&self.alpha_quantile, b.alpha_quantile, "alpha_quantile")?;
        let ks = axis(&self.bins_per_model, b.bins_per_model, "bins_per_model")?;
        let mut cells = Vec::new();
        for &delta in &deltas {
            for &gamma in &gammas {
                for &alpha_quantile in &alphas {
                    for &bins_per_model in &ks {
                        cells.push(TuneCell {
                            delta,
                            gamma,
                            alpha_quantile,
                            bins_per_model,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }
}

impl TuneCell {
    pub fn apply(&self, scenario: &ScenarioConfig) -> ScenarioConfig {
        let mut s = scenario.clone();
        s.bandit.delta = self.delta;
        s.bandit.gamma = self.gamma;
        s.bandit.alpha_quantile = self.alpha_quantile;
        s.bandit.bins_per_model = self.bins_per_model;
        s
    }
}

/// Runs `bandit_ucb` for every grid cell and ranks cells by mean realized
/// IV (descending), then by lower spread across seeds.
pub fn tune(scenario: &ScenarioConfig, grid: &TuneGrid) -> Result<Vec<TuneEntry>> {
    let cells = grid.cells(scenario)?;
    let seeds = seeds(scenario, grid.seeds.unwrap_or(4).max(1));
    let configs: Vec<ScenarioConfig> = cells.iter().map(|c| c.apply(scenario)).collect();
    for c in &configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let ivs: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(c, s)| run_seed(&configs[c], &PolicySpec::BanditUcb, s).map(|r| (c, r.realized_iv)))
        .collect::<Result<_>>()?;
    let mut entries: Vec<TuneEntry> = cells
        .iter()
        .enumerate()
        .map(|(c, &cell)| {
            let iv: Vec<f64> = ivs.iter().filter(|(i, _)| *i == c).map(|&(_, v)| v).collect();
            let m = mean(&iv);
            let var = iv.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / iv.len() as f64;
            TuneEntry {
                cell,
                mean_iv: m,
                std_iv: var.sqrt(),
                iv,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.mean_iv.total_cmp(&a.mean_iv).then(a.std_iv.total_cmp(&b.std_iv)));
    Ok(entries)
}

/// One capacity level of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub reviewers: usize,
    /// Review capacity as a fraction of the arrival rate.
    pub capacity_fraction: f64,
    /// Mean completed reviews per run under the bandit.
    pub jobs: f64,
    pub bandit_iv: f64,
    pub static_iv: f64,
    /// `bandit_iv / static_iv`.
    pub relative: f64,
    /// Seeds on which the bandit realized at least the static IV.
    pub bandit_ge_static: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySweep {
    pub points: Vec<CapacityPoint>,
}

impl CapacitySweep {
    /// Mean IV of each policy never drops as capacity grows.
    pub fn per_policy_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            w[1].bandit_iv >= w[0].bandit_iv && w[1].static_iv >= w[0].static_iv
        })
    }

    /// Bandit mean IV is at least the static mean at every point.
    pub fn bandit_dominates(&self) -> bool {
        self.points.iter().all(|p| p.bandit_iv >= p.static_iv)
    }

    /// The relative curve `bandit / static` never rises with capacity.
    pub fn relative_nonincreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].relative <= w[0].relative)
    }
}

/// Runs `bandit_ucb` and `static_calibration` at each reviewer count.
pub fn sweep_capacity(scenario: &ScenarioConfig, reviewers: &[usize], n_seeds: usize) -> Result<CapacitySweep> {
    let seeds = seeds(scenario, n_seeds.max(1));
    let policies = [PolicySpec::BanditUcb, PolicySpec::StaticCalibration];
    let mut points = Vec::with_capacity(reviewers.len());
    for &n in reviewers {
        let mut s = scenario.clone();
        s.reviewer_capacity.reviewers = Some(n);
        let runs = run_many(&s, &policies, &seeds)?;
        let bandit: Vec<f64> = runs[0].iter().map(|r| r.realized_iv).collect();
        let stat: Vec<f64> = runs[1].iter().map(|r| r.realized_iv).collect();
        let jobs = runs[0].iter().map(|r| r.reviews as f64).sum::<f64>() / seeds.len() as f64;
        let (bandit_iv, static_iv) = (mean(&bandit), mean(&stat));
        let per_hour = 60.0 / s.reviewer_capacity.mean_service_minutes;
        points.push(CapacityPoint {
            reviewers: n,
            capacity_fraction: if s.arrival_rate > 0.0 {
                n as f64 * per_hour / s.arrival_rate
            } else {
                0.0
            },
            jobs,
            bandit_iv,
            static_iv,
            relative: if static_iv > 0.0 { bandit_iv / static_iv } else { f64::NAN },
            bandit_ge_static: bandit.iter().zip(&stat).filter(|(b, s)| b >= s).count(),
            seeds: seeds.len(),
        });
    }
    Ok(CapacitySweep { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::standard_drift;

    #[test]
    fn identical_outcomes_give_zero_lift() {
        let iv = [10.0, 12.0, 9.0, 11.0];
        let (lift, lo, hi) = paired_lift(&iv, &iv, 1).unwrap();
        assert_eq!((lift, lo, hi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_ratio_gives_exact_lift() {
        let a = [10.0, 20.0, 30.0];
        let b: Vec<f64> = a.iter().map(|x| x * 1.25).collect();
        let (lift, lo, hi) = paired_lift(&a, &b, 1).unwrap();
        for v in [lift, lo, hi] {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_needs_two_seeds_and_positive_baseline() {
        assert!(matches!(paired_lift(&[1.0], &[2.0], 1), Err(SimError::TooFewSeeds(1))));
        assert!(matches!(paired_lift(&[0.0, 0.0], &[1.0, 2.0], 1), Err(SimError::ZeroBaseline)));
    }

    #[test]
    fn bootstrap_interval_brackets_lift() {
        let a = [10.0, 14.0, 9.0, 12.0, 11.0, 13.0];
        let b = [12.0, 15.0, 11.0, 12.5, 13.0, 14.0];
        let (lift, lo, hi) = paired_lift(&a, &b, 7).unwrap();
        assert!(lo <= lift && lift <= hi);
        assert!(lo > 0.0);
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.5), 2.0);
        assert_eq!(percentile(&xs, 0.125), 0.5);
    }

    #[test]
    fn grid_axes() {
        let s = standard_drift();
        let grid = TuneGrid {
            delta: Some(vec![0.05, 0.1]),
            gamma: Some(vec![0.99, 0.995, 1.0]),
            ..Default::default()
        };
        let cells = grid.cells(&s).unwrap();
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| c.bins_per_model == s.bandit.bins_per_model));
        let empty = TuneGrid {
            gamma: Some(vec![]),
            ..Default::default()
        };
        assert!(matches!(empty.cells(&s), Err(SimError::EmptyGrid("gamma"))));
    }
}
