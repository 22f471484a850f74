//! Review policies compared by the simulator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sevbandit_core::{CellSnapshot, ModelId, ParameterSnapshot, QueueEntry};

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Optimistic severity `beta_hat + u`, refreshed every snapshot.
    BanditUcb,
    /// One posterior draw per cell per snapshot, centered on `beta_hat`
    /// with scale `sigma / sqrt(xx)`.
    BanditThompson,
    /// Runs as `bandit_ucb` until the scenario's warm-up ends, then scores
    /// with the point estimates of that moment forever (no bonus, no
    /// learning, no models registered later).
    StaticCalibration,
    /// Largest raw score across models stands in for severity.
    MaxRawScore,
    /// Reviewers take turns serving each model's own queue, ordered by that
    /// model's raw score. `shares` weights the turns; empty means equal.
    FixedAllocation {
        #[serde(default)]
        shares: BTreeMap<ModelId, f64>,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::BanditUcb => "ucb",
            PolicySpec::BanditThompson => "thompson",
            PolicySpec::StaticCalibration => "static",
            PolicySpec::MaxRawScore => "max-raw",
            PolicySpec::FixedAllocation { .. } => "fixed",
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicySpec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ucb" | "bandit_ucb" => PolicySpec::BanditUcb,
            "thompson" | "bandit_thompson" => PolicySpec::BanditThompson,
            "static" | "static_calibration" => PolicySpec::StaticCalibration,
            "max-raw" | "max_raw_score" => PolicySpec::MaxRawScore,
            "fixed" | "fixed_allocation" => PolicySpec::FixedAllocation {
                shares: BTreeMap::new(),
            },
            other => return Err(SimError::UnknownPolicy(other.to_string())),
        })
    }
}

/// Snapshot with one Thompson draw per cell in place of `beta_hat + u`.
pub(crate) fn thompson_snapshot<R: Rng>(base: &ParameterSnapshot, rng: &mut R) -> ParameterSnapshot {
    base.with_coefficients(|_, _, c: &CellSnapshot| {
        let scale = if c.xx > 0.0 { c.sigma / c.xx.sqrt() } else { c.ucb_bonus };
        let z: f64 = rng.sample(StandardNormal);
        c.beta_hat + scale * z
    })
}

/// Snapshot scoring with point estimates only.
pub(crate) fn point_snapshot(base: &ParameterSnapshot) -> ParameterSnapshot {
    base.with_coefficients(|_, _, c| c.beta_hat)
}

/// Priority with the largest raw score as the severity estimate.
pub(crate) fn max_raw_rank(entry: &QueueEntry, velocity_constant: f64) -> Option<f64> {
    let raw = entry
        .content
        .risk_scores
        .values()
        .copied()
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::max);
    Some(raw * (entry.view_velocity + velocity_constant))
}

/// Smooth weighted round-robin over models.
#[derive(Debug, Clone, Default)]
pub(crate) struct RoundRobin {
    credit: BTreeMap<ModelId, f64>,
}

impl RoundRobin {
    /// Next model to serve among `live`, weighted by `shares` (missing
    /// entries count as 1 when `shares` is empty, 0 otherwise).
    pub(crate) fn next<'a>(
        &mut self,
        live: impl Iterator<Item = &'a ModelId>,
        shares: &BTreeMap<ModelId, f64>,
    ) -> Option<ModelId> {
        let mut total = 0.0;
        let mut best: Option<(f64, ModelId)> = None;
        for m in live {
            let w = if shares.is_empty() {
                1.0
            } else {
                shares.get(m).copied().unwrap_or(0.0)
            };
            if w <= 0.0 {
                continue;
            }
            total += w;
            let c = self.credit.entry(m.clone()).or_default();
            *c += w;
            if best.as_ref().is_none_or(|(b, _)| *c > *b) {
                best = Some((*c, m.clone()));
            }
        }
        let (_, pick) = best?;
        *self.credit.get_mut(&pick).expect("credited above") -= total;
        Some(pick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for name in ["ucb", "thompson", "static", "max-raw", "fixed"] {
            let p: PolicySpec = name.parse().unwrap();
            assert_eq!(p.name(), name);
        }
        assert!("greedy".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn json_tagging() {
        let p: PolicySpec = serde_json::from_str(r#"{"kind":"bandit_ucb"}"#).unwrap();
        assert_eq!(p, PolicySpec::BanditUcb);
        let p: PolicySpec = serde_json::from_str(r#"{"kind":"fixed_allocation","shares":{"a":2}}"#).unwrap();
        assert!(matches!(p, PolicySpec::FixedAllocation { ref shares } if shares[&ModelId::new("a")] == 2.0));
    }

    #[test]
    fn round_robin_follows_shares() {
        let models = [ModelId::new("a"), ModelId::new("b")];
        let shares = BTreeMap::from([(models[0].clone(), 2.0), (models[1].clone(), 1.0)]);
        let mut rr = RoundRobin::default();
        let picks: Vec<String> = (0..6)
            .map(|_| rr.next(models.iter(), &shares).unwrap().to_string())
            .collect();
        assert_eq!(picks, ["a", "b", "a", "a", "b", "a"]);
    }

    #[test]
    fn round_robin_equal_when_unspecified() {
        let models = [ModelId::new("a"), ModelId::new("b"), ModelId::new("c")];
        let mut rr = RoundRobin::default();
        let picks: Vec<String> = (0..6)
            .map(|_| rr.next(models.iter(), &BTreeMap::new()).unwrap().to_string())
            .collect();
        assert_eq!(picks, ["a", "b", "c", "a", "b", "c"]);
    }
}
