//! Dynamic set of risk models and their per-model score bins.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Hours, ModelId};

/// Default number of quantile bins fitted per model.
pub const DEFAULT_BINS: usize = 8;

/// Monotone version counter, bumped on every registration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegistryVersion(pub u64);

/// Bin boundaries `e_0 < e_1 < ... < e_k` for one model.
///
/// Bin `j` is `[e_j, e_{j+1})`. The top bin is closed at `e_k` and also takes
/// every score above it, so the strongest flags are never dropped. Scores below
/// `e_0` (and non-finite scores) belong to no bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinLayout {
    edges: Vec<f64>,
}

impl BinLayout {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidBinLayout(format!(
                "need at least two edges, got {}",
                edges.len()
            )));
        }
        if let Some(e) = edges.iter().find(|e| !e.is_finite()) {
            return Err(Error::InvalidBinLayout(format!("non-finite edge {e}")));
        }
        if let Some(w) = edges.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBinLayout(format!(
                "edges must be strictly increasing ({} >= {})",
                w[0], w[1]
            )));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn upper(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// Index of the bin containing `z`, if any.
    pub fn bin_of(&self, z: f64) -> Option<usize> {
        if !z.is_finite() || z < self.edges[0] {
            return None;
        }
        // number of edges <= z, minus one, clamped to the top bin
        let idx = self.edges.partition_point(|&e| e <= z);
        Some((idx - 1).min(self.bin_count() - 1))
    }
}

impl TryFrom<Vec<f64>> for BinLayout {
    type Error = Error;

    fn try_from(edges: Vec<f64>) -> Result<Self> {
        Self::new(edges)
    }
}

impl From<BinLayout> for Vec<f64> {
    fn from(layout: BinLayout) -> Self {
        layout.edges
    }
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be non-empty and ascending.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        sorted[lo.min(sorted.len() - 1)]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Fits `k` equal-mass bins at the empirical `0, 1/k, ..., 1` quantiles of
/// `observed_scores`. Coinciding quantiles are merged, so fewer than `k`
/// bins may come back. Non-finite scores are ignored.
pub fn fit_bins(observed_scores: &[f64], k: usize) -> Result<BinLayout> {
    if k < 1 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let mut sorted: Vec<f64> = observed_scores.iter().copied().filter(|s| s.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::EmptyInput("observed_scores"));
    }
    sorted.sort_by(f64::total_cmp);

    let mut edges: Vec<f64> = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let q = if j == k {
            sorted[sorted.len() - 1]
        } else {
            quantile_sorted(&sorted, j as f64 / k as f64)
        };
        if edges.last().is_none_or(|&last| q > last) {
            edges.push(q);
        }
    }
    if edges.len() == 1 {
        // every score identical: one bin holding exactly that value
        edges.push(edges[0].next_up());
    }
    BinLayout::new(edges)
}

/// Finite optimistic prior used for cells with no data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimisticPrior {
    /// Coefficient reported while a cell has no data.
    pub prior_beta: f64,
    /// Bonus reported while a cell has no data. Also used as the residual
    /// scale of the pseudo-observations that keep early estimates of sigma
    /// away from zero.
    pub prior_uncertainty: f64,
    /// Number of pseudo-observations backing the prior in the noise estimate.
    pub prior_weight: f64,
}

impl Default for OptimisticPrior {
    fn default() -> Self {
        Self {
            prior_beta: 1.0,
            prior_uncertainty: 2.0,
            prior_weight: 1.0,
        }
    }
}

impl OptimisticPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_beta.is_finite() && self.prior_beta >= 0.0) {
            return Err(Error::invalid("prior_beta", "must be finite and >= 0"));
        }
        if !(self.prior_uncertainty.is_finite() && self.prior_uncertainty > 0.0) {
            return Err(Error::invalid("prior_uncertainty", "must be finite and > 0"));
        }
        if !(self.prior_weight.is_finite() && self.prior_weight >= 0.0) {
            return Err(Error::invalid("prior_weight", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModelDescriptor {
    pub model_id: ModelId,
    pub display_name: String,
    pub created_at: Hours,
    pub bin_layout: BinLayout,
    pub cold_start_prior: OptimisticPrior,
}

/// Registered risk models keyed by id.
///
/// The registry is owned by the single writer (see [`crate::BanditState`]);
/// readers only ever see it through published snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    version: RegistryVersion,
    models: BTreeMap<ModelId, Arc<RiskModelDescriptor>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: RiskModelDescriptor) -> Result<RegistryVersion> {
        if let Some(existing) = self.models.get(&descriptor.model_id) {
            return Err(Error::DuplicateModel {
                existing: Box::new((**existing).clone()),
            });
        }
        descriptor.cold_start_prior.validate()?;
        self.models
            .insert(descriptor.model_id.clone(), Arc::new(descriptor));
        self.version.0 += 1;
        Ok(self.version)
    }

    pub fn version(&self) -> RegistryVersion {
        self.version
    }

    pub fn get(&self, id: &ModelId) -> Option<&Arc<RiskModelDescriptor>> {
        self.models.get(id)
    }

    pub fn contains(&self, id: &ModelId) -> bool {
        self.models.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<RiskModelDescriptor>> {
        self.models.values()
    }
}
