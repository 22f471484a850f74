//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p sevbandit-cli --test acceptance` runs everything; a
//! trailing argument runs only the checks whose name contains it, e.g.
//! `cargo test -p sevbandit-cli --test acceptance -- hawkes`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sevbandit_core::iv::{fit_hawkes, predict_future_views, simulate_hawkes, HawkesSample};
use sevbandit_core::{
    BanditConfig, BanditState, BinLayout, ContentId, ContentItem, HawkesParams, IntensityState, LabeledExample,
    ModelId, OptimisticPrior, ReviewPool, ReviewerEvent, RiskModelDescriptor, SchedulerConfig, SigmaMode, ViewHistory,
};
use sevbandit_service::script::{random_session, run_with_crashes};
use sevbandit_sim::experiment::{run_many, seeds};
use sevbandit_sim::output::write_capacity_csv;
use sevbandit_sim::scenario::{new_model_responsiveness, standard_drift};
use sevbandit_sim::{ab_compare, sweep_capacity, PolicySpec};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Check {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Verdict,
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks = [
        Check {
            name: "oracle-equivalence",
            budget: Some(Duration::from_secs(10)),
            run: oracle_equivalence,
        },
        Check {
            name: "sigma-recursion-audit",
            budget: None,
            run: sigma_recursion_audit,
        },
        Check {
            name: "ucb-coverage",
            budget: Some(Duration::from_secs(60)),
            run: ucb_coverage,
        },
        Check {
            name: "hawkes-consistency",
            budget: Some(Duration::from_secs(300)),
            run: hawkes_consistency,
        },
        Check {
            name: "scheduler-oracle",
            budget: None,
            run: scheduler_oracle,
        },
        Check {
            name: "drift-lift",
            budget: Some(Duration::from_secs(600)),
            run: drift_lift,
        },
        Check {
            name: "new-model-responsiveness",
            budget: None,
            run: new_model,
        },
        Check {
            name: "capacity-sweep",
            budget: None,
            run: capacity_sweep,
        },
        Check {
            name: "crash-recovery",
            budget: None,
            run: crash_recovery,
        },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for check in &checks {
        if filter.as_deref().is_some_and(|f| !check.name.contains(f)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = (check.run)();
        let took = start.elapsed();
        let in_budget = check.budget.is_none_or(|b| took <= b);
        let pass = v.pass && in_budget;
        let budget = match check.budget {
            Some(b) if !in_budget => format!(" OVER BUDGET of {:.0} s", b.as_secs_f64()),
            Some(b) => format!(" / {:.0} s", b.as_secs_f64()),
            None => String::new(),
        };
        println!(
            "{} {:<26} {} [{:.1} s{}]",
            if pass { "PASS" } else { "FAIL" },
            check.name,
            v.detail,
            took.as_secs_f64(),
            budget
        );
        if !pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() * mean
}

fn descriptor(id: &str, edges: Vec<f64>, prior: OptimisticPrior) -> RiskModelDescriptor {
    RiskModelDescriptor {
        model_id: ModelId::new(id),
        display_name: id.to_string(),
        created_at: 0.0,
        bin_layout: BinLayout::new(edges).unwrap(),
        cold_start_prior: prior,
    }
}

/// Every retained example of one cell, for batch recomputation.
#[derive(Default)]
struct BatchCell {
    samples: Vec<(f64, f64, f64)>,
}

impl BatchCell {
    /// Coefficient and noise scale recomputed from scratch at `now`.
    fn solve(&self, gamma: f64, now: f64, prior: &OptimisticPrior, floor: f64) -> (f64, f64) {
        let w = |t: f64| gamma.powf(now - t);
        let (mut xx, mut xy, mut n) = (0.0, 0.0, 0.0);
        for &(x, y, t) in &self.samples {
            xx += w(t) * x * x;
            xy += w(t) * x * y;
            n += w(t);
        }
        let cold = !(xx > 0.0);
        let beta = if cold { prior.prior_beta } else { xy / xx };
        let rss: f64 = if cold {
            0.0
        } else {
            self.samples.iter().map(|&(x, y, t)| (w(t) * (y - beta * x)).powi(2)).sum()
        };
        let decay = gamma.powf(now);
        let prior_n = prior.prior_weight * decay;
        let prior_rss = prior.prior_weight * (prior.prior_uncertainty * decay).powi(2);
        let denom = n + prior_n;
        let sigma = if denom > 0.0 {
            ((rss + prior_rss) / denom).max(0.0).sqrt().max(floor)
        } else {
            prior.prior_uncertainty
        };
        (beta, sigma)
    }
}

fn oracle_equivalence() -> Verdict {
    let config = BanditConfig {
        gamma: 0.97,
        tau_max: Some(24.0),
        ..Default::default()
    };
    let models = [
        ("a", vec![0.0, 0.25, 0.5, 0.75, 1.0], OptimisticPrior::default()),
        (
            "b",
            vec![0.0, 0.5, 1.0],
            OptimisticPrior {
                prior_beta: 0.5,
                prior_uncertainty: 1.0,
                prior_weight: 3.0,
            },
        ),
    ];
    let tau = config.tau_max.unwrap();
    let (mut worst_beta, mut worst_sigma) = (0.0f64, 0.0f64);
    let mut comparisons = 0u64;
    let mut evictions = 0usize;
    let empty = BatchCell::default();
    for stream in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + stream);
        let mut state = BanditState::new(config.clone()).unwrap();
        let mut batch: BTreeMap<(ModelId, usize), BatchCell> = BTreeMap::new();
        for (id, edges, prior) in &models {
            state.register_model(descriptor(id, edges.clone(), *prior)).unwrap();
        }
        let mut now = 0.0f64;
        let mut labels = 0;
        while labels < 1000 {
            let u: f64 = rng.random();
            if u < 0.75 {
                let t = now + if rng.random::<f64>() < 0.3 { 0.0 } else { exponential(&mut rng, 0.03) };
                let mut scores = BTreeMap::new();
                scores.insert(ModelId::new("a"), rng.random_range(-0.2f64..1.3));
                if rng.random::<f64>() < 0.7 {
                    scores.insert(ModelId::new("b"), rng.random_range(0.0..1.5));
                }
                let x_ref = scores[&ModelId::new("a")].max(0.0);
                let severity = if rng.random::<f64>() < 0.4 {
                    0.0
                } else {
                    (1.5 * x_ref + 0.5 * normal(&mut rng)).abs()
                };
                state
                    .update_with_label(&LabeledExample {
                        content_id: ContentId::new(format!("s{stream}-{labels}")),
                        scores: scores.clone(),
                        severity,
                        label_time: t,
                    })
                    .unwrap();
                now = now.max(t);
                for (id, edges, _) in &models {
                    let id = ModelId::new(*id);
                    let Some(&z) = scores.get(&id) else { continue };
                    if let Some(bin) = BinLayout::new(edges.clone()).unwrap().bin_of(z) {
                        batch.entry((id, bin)).or_default().samples.push((z, severity, t));
                    }
                }
                labels += 1;
            } else if u < 0.88 {
                let dt = exponential(&mut rng, 0.5);
                state.apply_discount(dt).unwrap();
                now += dt;
            } else if u < 0.97 {
                let t = now + rng.random::<f64>() * 0.2;
                evictions += state.evict_stale(t).unwrap();
                now = now.max(t);
                for cell in batch.values_mut() {
                    cell.samples.retain(|&(_, _, s)| now - s < tau);
                }
            } else {
                state.publish_snapshot();
            }
            for (id, _, prior) in &models {
                let id = ModelId::new(*id);
                for (bin, cell) in state.cells(&id).unwrap().iter().enumerate() {
                    let (beta, sigma) = batch
                        .get(&(id.clone(), bin))
                        .unwrap_or(&empty)
                        .solve(config.gamma, now, prior, config.sigma_floor);
                    let rel = if beta == cell.beta_hat() {
                        0.0
                    } else {
                        (cell.beta_hat() - beta).abs() / beta.abs()
                    };
                    worst_beta = worst_beta.max(rel);
                    worst_sigma = worst_sigma.max((cell.sigma() - sigma).abs());
                    comparisons += 1;
                }
            }
        }
    }
    verdict(
        worst_beta <= 1e-9 && worst_sigma <= 1e-6 && evictions > 0,
        format!(
            "100 streams x 1000 labels, {comparisons} cell comparisons, {evictions} evictions; max beta rel err {worst_beta:.1e} (<= 1e-9), max sigma err {worst_sigma:.1e} (<= 1e-6)"
        ),
    )
}

fn sigma_recursion_audit() -> Verdict {
    let no_prior = OptimisticPrior {
        prior_beta: 0.0,
        prior_uncertainty: 1.0,
        prior_weight: 0.0,
    };
    let state_for = |mode: SigmaMode| {
        let mut s = BanditState::new(BanditConfig {
            gamma: 1.0,
            tau_max: None,
            sigma_mode: mode,
            ..Default::default()
        })
        .unwrap();
        s.register_model(descriptor("m", vec![0.0, 10.0], no_prior)).unwrap();
        s
    };
    let label = |x: f64, y: f64, i: usize| LabeledExample {
        content_id: ContentId::new(format!("e{i}")),
        scores: BTreeMap::from([(ModelId::new("m"), x)]),
        severity: y,
        label_time: 0.0,
    };
    let m = ModelId::new("m");

    // Random streams: residual-based sigma against the batch residual.
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let mut s = state_for(SigmaMode::Rss);
        let mut data = Vec::new();
        for i in 0..rng.random_range(2..200) {
            let x: f64 = rng.random_range(0.01..5.0);
            let y = (0.8 * x + normal(&mut rng)).abs();
            s.update_with_label(&label(x, y, i)).unwrap();
            data.push((x, y));
        }
        let xx: f64 = data.iter().map(|(x, _)| x * x).sum();
        let xy: f64 = data.iter().map(|(x, y)| x * y).sum();
        let beta = xy / xx;
        let var = data.iter().map(|(x, y)| (y - beta * x).powi(2)).sum::<f64>() / data.len() as f64;
        let got = s.cell(&m, 0).unwrap().sigma().powi(2);
        worst = worst.max((got - var).abs() / var);
    }

    // The documented three-example stream: x = 1 with y = 1, 0, 2.
    // Batch: beta = 1, residuals 0, -1, 1, sigma^2 = 2/3.
    let stream = [(1.0, 1.0), (1.0, 0.0), (1.0, 2.0)];
    let mut rss = state_for(SigmaMode::Rss);
    let mut lit = state_for(SigmaMode::LiteralRecursion);
    for (i, &(x, y)) in stream.iter().enumerate() {
        rss.update_with_label(&label(x, y, i)).unwrap();
        lit.update_with_label(&label(x, y, i)).unwrap();
    }
    let batch = (2.0f64 / 3.0).sqrt();
    let rss_sigma = rss.cell(&m, 0).unwrap().sigma();
    let lit_sigma = lit.cell(&m, 0).unwrap().sigma();
    let diverges = (lit_sigma - batch).abs() > 1e-3;
    verdict(
        worst <= 1e-9 && (rss_sigma - batch).abs() <= 1e-9 && diverges,
        format!(
            "residual recursion max rel err {worst:.1e} over 200 streams (<= 1e-9); stream (1,1),(1,0),(1,2): batch sigma {batch:.6}, residual {rss_sigma:.6}, literal {lit_sigma:.6} (diverges: {diverges})"
        ),
    )
}

fn ucb_coverage() -> Verdict {
    let prior = OptimisticPrior {
        prior_beta: 0.0,
        prior_uncertainty: 1.0,
        prior_weight: 0.0,
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for delta in [0.05, 0.1, 0.3] {
        let mut rng = ChaCha8Rng::seed_from_u64((delta * 1000.0) as u64);
        let mut covered = 0;
        let cells = 10_000;
        for c in 0..cells {
            let beta: f64 = rng.random_range(2.0..4.0);
            let n = rng.random_range(20..=60);
            let mut s = BanditState::new(BanditConfig {
                delta,
                gamma: 1.0,
                tau_max: None,
                ..Default::default()
            })
            .unwrap();
            s.register_model(descriptor("m", vec![0.0, 1.0], prior)).unwrap();
            for i in 0..n {
                let x: f64 = rng.random_range(0.5..1.0);
                // Noise is small enough next to beta * x (>= 6 sd) that
                // severities are never negative in practice.
                let y = beta * x + 0.15 * normal(&mut rng);
                s.update_with_label(&LabeledExample {
                    content_id: ContentId::new(format!("c{c}-{i}")),
                    scores: BTreeMap::from([(ModelId::new("m"), x)]),
                    severity: y.max(0.0),
                    label_time: 0.0,
                })
                .unwrap();
            }
            let cell = s.cell(&ModelId::new("m"), 0).unwrap();
            if cell.beta_hat() + cell.ucb_bonus() >= beta {
                covered += 1;
            }
        }
        let freq = covered as f64 / cells as f64;
        let need = 1.0 - delta - 0.02;
        pass &= freq >= need;
        parts.push(format!("delta {delta}: {freq:.4} (>= {need:.2})"));
    }
    verdict(pass, format!("10^4 cells each, 20-60 labels per cell; {}", parts.join(", ")))
}

fn hawkes_consistency() -> Verdict {
    let mu = 1.5;
    let now = 5.0;
    let horizon = 4.0;
    let past = [now - 1.0, now - 0.3, now - 0.05];
    let runs = 100_000;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for omega in [0.5, 2.0, 6.0] {
        for ratio in [0.2, 0.5, 0.8] {
            let params = HawkesParams {
                mu,
                excitation: ratio * omega,
                omega,
            };
            let mut history = ViewHistory::new(ContentId::new("h"), 0.0);
            history.event_times = past.to_vec();
            let analytic = predict_future_views(&history, &params, now, horizon).unwrap();
            let state = IntensityState::from_events(&past, omega);
            let total: usize = (0..runs)
                .map(|_| simulate_hawkes(&params, &state, now, now + horizon, &mut rng).len())
                .sum();
            let mc = total as f64 / runs as f64;
            worst = worst.max((analytic - mc).abs() / mc);
        }
    }

    let truth = HawkesParams {
        mu: 0.8,
        excitation: 1.2,
        omega: 2.0,
    };
    let histories = 500;
    let samples: Vec<HawkesSample> = (0..histories)
        .map(|_| HawkesSample {
            start: 0.0,
            end: 24.0,
            events: simulate_hawkes(&truth, &IntensityState::new(), 0.0, 24.0, &mut rng),
        })
        .collect();
    let fit = fit_hawkes(&samples).unwrap().params;
    let errs = [
        (fit.mu - truth.mu).abs() / truth.mu,
        (fit.excitation - truth.excitation).abs() / truth.excitation,
        (fit.omega - truth.omega).abs() / truth.omega,
    ];
    let worst_fit = errs.iter().copied().fold(0.0, f64::max);
    verdict(
        worst <= 0.02 && worst_fit <= 0.15,
        format!(
            "3x3 grid vs {runs} runs each: max rel gap {:.2}% (<= 2%); fit on {histories} histories: mu {:.3}, a {:.3}, omega {:.3} vs 0.8/1.2/2.0, max rel err {:.1}% (<= 15%)",
            worst * 100.0,
            fit.mu,
            fit.excitation,
            fit.omega,
            worst_fit * 100.0
        ),
    )
}

fn scheduler_oracle() -> Verdict {
    let edges_a = vec![0.0, 0.5, 1.0];
    let edges_b = vec![0.0, 0.25, 0.75, 1.0];
    let coef_a = [1.5, -0.5];
    let coef_b = [2.0, 0.0, 1.0];
    let mut state = BanditState::new(BanditConfig::default()).unwrap();
    state.register_model(descriptor("a", edges_a.clone(), OptimisticPrior::default())).unwrap();
    state.register_model(descriptor("b", edges_b.clone(), OptimisticPrior::default())).unwrap();
    let snapshot = Arc::new(state.publish_snapshot().with_coefficients(|id, j, _| match id.as_str() {
        "a" => coef_a[j],
        _ => coef_b[j],
    }));
    let config = SchedulerConfig::default();
    let hawkes = config.hawkes;
    let c = config.velocity_constant;
    let now = 5.0;
    let score_levels = [-0.1, 0.0, 0.25, 0.5, 0.75, 0.9, 1.2];
    let view_patterns: [&[f64]; 3] = [&[], &[4.0], &[4.5, 4.9]];

    // Independent restatement of the documented priority.
    let bin = |edges: &[f64], z: f64| -> Option<usize> {
        (z >= edges[0]).then(|| edges[1..].iter().take_while(|&&e| z >= e).count().min(edges.len() - 2))
    };
    let oracle_priority = |scores: &BTreeMap<ModelId, f64>, views: &[f64]| -> f64 {
        let mut best: Option<f64> = None;
        for (id, &z) in scores {
            let (edges, coef): (&[f64], &[f64]) = if id.as_str() == "a" {
                (&edges_a, &coef_a)
            } else {
                (&edges_b, &coef_b)
            };
            if let Some(j) = bin(edges, z) {
                let v = coef[j] * z;
                if best.is_none_or(|b| v > b) {
                    best = Some(v);
                }
            }
        }
        let severity = best.filter(|&v| v > 0.0).unwrap_or(0.0);
        let velocity = hawkes.mu
            + hawkes.excitation * views.iter().map(|&t| (-hawkes.omega * (now - t)).exp()).sum::<f64>();
        severity * (velocity + c)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatched_pools = 0;
    let mut worst_priority = 0.0f64;
    let mut entries_total = 0usize;
    let mut largest = 0;
    for p in 0..1000 {
        let size = if p == 0 { 10_000 } else { rng.random_range(1..=10_000) };
        largest = largest.max(size);
        entries_total += size;
        let mut pool = ReviewPool::new(config.clone(), snapshot.clone()).unwrap();
        let mut ids: Vec<usize> = (0..size).collect();
        ids.shuffle(&mut rng);
        let mut expected = Vec::with_capacity(size);
        for &k in &ids {
            let mut scores = BTreeMap::new();
            if rng.random::<f64>() < 0.8 {
                scores.insert(ModelId::new("a"), score_levels[rng.random_range(0..score_levels.len())]);
            }
            if rng.random::<f64>() < 0.6 {
                scores.insert(ModelId::new("b"), score_levels[rng.random_range(0..score_levels.len())]);
            }
            let arrival = rng.random_range(0..10) as f64 * 0.5;
            let views = view_patterns[rng.random_range(0..view_patterns.len())];
            let id = format!("c{k:05}");
            let priority = oracle_priority(&scores, views);
            let mut item = ContentItem::new(id.as_str(), arrival, scores);
            item.views = IntensityState::from_events(views, hawkes.omega);
            pool.ingest(item, now);
            expected.push((priority, arrival, id));
        }
        expected.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
        let event = ReviewerEvent {
            reviewer_id: "r".into(),
            available_at: now,
        };
        let mut same = true;
        for (priority, _, id) in &expected {
            let got = pool.next_job(&event).expect("pool holds every ingested item");
            let gap = (got.priority - priority).abs() / priority.abs().max(1e-300);
            if got.priority != *priority {
                worst_priority = worst_priority.max(gap);
            }
            same &= got.content.content_id.as_str() == id;
        }
        same &= pool.next_job(&event).is_none();
        if !same {
            mismatched_pools += 1;
        }
    }
    verdict(
        mismatched_pools == 0 && worst_priority <= 1e-12,
        format!(
            "1000 pools (largest {largest}, {entries_total} entries): {mismatched_pools} extraction orders differ from the sort oracle; max priority rel gap {worst_priority:.1e}"
        ),
    )
}

fn drift_lift() -> Verdict {
    let scenario = standard_drift();
    let est = ab_compare(&scenario, &PolicySpec::StaticCalibration, &PolicySpec::BanditUcb, 32).unwrap();
    verdict(
        est.ci_low > 0.0 && est.lift >= 0.10,
        format!(
            "32 paired seeds: static {:.0} -> ucb {:.0}, lift {:+.1}% (95% CI {:+.1}% .. {:+.1}%; need CI > 0 and lift >= 10%), ucb ahead on {}/32",
            est.mean_a,
            est.mean_b,
            est.lift * 100.0,
            est.ci_low * 100.0,
            est.ci_high * 100.0,
            est.b_at_least_a
        ),
    )
}

fn new_model() -> Verdict {
    let scenario = new_model_responsiveness();
    let injection = &scenario.new_model_injections[0];
    let (id, from) = (injection.model.id.clone(), injection.time);
    let seeds = seeds(&scenario, 32);
    let runs = run_many(&scenario, &[PolicySpec::BanditUcb, PolicySpec::StaticCalibration], &seeds).unwrap();
    let fast = runs[0]
        .iter()
        .filter(|r| r.snapshots_until_share(&id, from, 0.5).is_some_and(|k| k <= 50))
        .count();
    let slowest = runs[0]
        .iter()
        .filter_map(|r| r.snapshots_until_share(&id, from, 0.5))
        .max()
        .unwrap_or(0);
    let static_max = runs[1].iter().map(|r| r.max_share_after(&id, from)).fold(0.0, f64::max);
    verdict(
        fast >= 30 && static_max < 0.05,
        format!(
            "ucb above 50% share within 50 snapshots on {fast}/32 seeds (>= 30; slowest {slowest}); static max share {:.1}% (< 5%)",
            static_max * 100.0
        ),
    )
}

fn capacity_sweep() -> Verdict {
    let scenario = standard_drift();
    let reviewers = [1, 2, 4, 8, 16];
    let sweep = sweep_capacity(&scenario, &reviewers, 8).unwrap();
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("capacity.csv");
    write_capacity_csv(&sweep, std::fs::File::create(&path).unwrap()).unwrap();
    let rows = std::fs::read_to_string(&path).unwrap().lines().count().saturating_sub(1);
    let curve: Vec<String> = sweep
        .points
        .iter()
        .map(|p| format!("{:.2}@{:.0}", p.relative, p.jobs))
        .collect();
    let behind: Vec<String> = sweep
        .points
        .iter()
        .filter(|p| p.bandit_iv < p.static_iv)
        .map(|p| {
            format!(
                "{} reviewers: ucb {:.0} < static {:.0}, ahead on {}/{} seeds",
                p.reviewers, p.bandit_iv, p.static_iv, p.bandit_ge_static, p.seeds
            )
        })
        .collect();
    let (mono, dom, rel) = (
        sweep.per_policy_monotone(),
        sweep.bandit_dominates(),
        sweep.relative_nonincreasing(),
    );
    verdict(
        rows == reviewers.len() && mono && dom && rel,
        format!(
            "8 paired seeds, relative IV by jobs [{}]; IV rises with capacity: {mono}, bandit >= static everywhere: {dom}{}, relative curve monotone: {rel}; CSV {}",
            curve.join(" "),
            if behind.is_empty() { String::new() } else { format!(" ({})", behind.join("; ")) },
            path.display()
        ),
    )
}

fn crash_recovery() -> Verdict {
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let session = random_session(2024, 3000);
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut kills = sample(&mut rng, session.len(), 10).into_vec();
    kills.sort_unstable();
    let root = tempfile::tempdir().unwrap();
    let (clean, crashed) = runtime.block_on(async {
        let clean = run_with_crashes(&session, &root.path().join("clean"), 8, &[], false, &kills)
            .await
            .unwrap();
        let crashed = run_with_crashes(&session, &root.path().join("crashed"), 8, &kills, true, &kills)
            .await
            .unwrap();
        (clean, crashed)
    });
    let snapshots_match = crashed.observed == clean.observed;
    let dispatch_match = crashed.dispatched == clean.dispatched;
    let final_match = crashed.state == clean.state && crashed.pending == clean.pending && crashed.metrics == clean.metrics;
    verdict(
        crashed.restarts == 10 && snapshots_match && dispatch_match && final_match,
        format!(
            "{} ops, kills at {kills:?} (each leaving a torn log tail): snapshots after restart identical {snapshots_match}, {} dispatches in identical order {dispatch_match}, final state identical {final_match}",
            session.len(),
            clean.dispatched.len()
        ),
    )
}
