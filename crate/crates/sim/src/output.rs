//! CSV time series and JSON summaries.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;
use sevbandit_core::{Hours, ModelId};

use crate::error::Result;
use crate::experiment::{CapacitySweep, TuneEntry};
use crate::policy::PolicySpec;
use crate::run::SimResult;

/// Everything in a [`SimResult`] except the per-interval series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary<'a> {
    pub scenario: &'a str,
    pub policy: &'a PolicySpec,
    pub seed: u64,
    pub realized_iv: f64,
    pub total_violating_iv: f64,
    pub estimated_realized_iv: f64,
    pub arrivals: u64,
    pub dispatches: u64,
    pub reviews: u64,
    pub removed: u64,
    pub expired: u64,
    pub reviewer_hours: f64,
    pub snapshots: u64,
    pub attribution: &'a std::collections::BTreeMap<ModelId, u64>,
    pub first_label: &'a std::collections::BTreeMap<ModelId, Hours>,
    pub registered_at: &'a std::collections::BTreeMap<ModelId, Hours>,
}

impl<'a> From<&'a SimResult> for SimSummary<'a> {
    fn from(r: &'a SimResult) -> Self {
        Self {
            scenario: &r.scenario,
            policy: &r.policy,
            seed: r.seed,
            realized_iv: r.realized_iv,
            total_violating_iv: r.total_violating_iv,
            estimated_realized_iv: r.estimated_realized_iv,
            arrivals: r.arrivals,
            dispatches: r.dispatches,
            reviews: r.reviews,
            removed: r.removed,
            expired: r.expired,
            reviewer_hours: r.reviewer_hours,
            snapshots: r.snapshots,
            attribution: &r.attribution,
            first_label: &r.first_label,
            registered_at: &r.registered_at,
        }
    }
}

pub fn write_summary_json<W: Write>(result: &SimResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &SimSummary::from(result))?;
    Ok(())
}

/// One row per interval. Per-model columns are `dispatch:<model>` and
/// `beta:<model>:<bin>`; models registered mid-run are blank before.
pub fn write_intervals_csv<W: Write>(result: &SimResult, out: W) -> Result<()> {
    let models: BTreeSet<&ModelId> = result
        .intervals
        .iter()
        .flat_map(|i| i.beta_hat.keys().chain(i.dispatches.keys()))
        .collect();
    let bins: Vec<(&ModelId, usize)> = models
        .iter()
        .map(|m| {
            let k = result
                .intervals
                .iter()
                .filter_map(|i| i.beta_hat.get(*m).map(Vec::len))
                .max()
                .unwrap_or(0);
            (*m, k)
        })
        .collect();

    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "start",
        "end",
        "snapshot_id",
        "arrivals",
        "reviews",
        "realized_iv",
        "pool_depth",
        "unattributed_dispatches",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(models.iter().map(|m| format!("dispatch:{m}")));
    for (m, k) in &bins {
        header.extend((0..*k).map(|j| format!("beta:{m}:{j}")));
    }
    w.write_record(&header)?;

    for i in &result.intervals {
        let mut row = vec![
            i.start.to_string(),
            i.end.to_string(),
            i.snapshot_id.to_string(),
            i.arrivals.to_string(),
            i.reviews.to_string(),
            i.realized_iv.to_string(),
            i.pool_depth.to_string(),
            i.unattributed_dispatches.to_string(),
        ];
        row.extend(models.iter().map(|m| i.dispatches.get(*m).copied().unwrap_or(0).to_string()));
        for (m, k) in &bins {
            let betas = i.beta_hat.get(*m);
            row.extend((0..*k).map(|j| betas.and_then(|b| b.get(j)).map_or(String::new(), |b| b.to_string())));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_capacity_csv<W: Write>(sweep: &CapacitySweep, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &sweep.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TuneRow {
    rank: usize,
    delta: f64,
    gamma: f64,
    alpha_quantile: f64,
    bins_per_model: usize,
    mean_iv: f64,
    std_iv: f64,
}

pub fn write_tune_csv<W: Write>(entries: &[TuneEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (rank, e) in entries.iter().enumerate() {
        w.serialize(TuneRow {
            rank: rank + 1,
            delta: e.cell.delta,
            gamma: e.cell.gamma,
            alpha_quantile: e.cell.alpha_quantile,
            bins_per_model: e.cell.bins_per_model,
            mean_iv: e.mean_iv,
            std_iv: e.std_iv,
        })?;
    }
    w.flush()?;
    Ok(())
}
