//! Piecewise-linear rescaling of raw risk scores, and top-alpha selection of
//! training examples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{fit_bins, BinLayout};
use crate::types::ModelId;

/// `coefficients[j] * z` for the bin `j` holding `z`, and 0 outside every bin.
pub fn calibrate_piecewise(layout: &BinLayout, coefficients: &[f64], z: f64) -> f64 {
    debug_assert_eq!(layout.bin_count(), coefficients.len());
    match layout.bin_of(z) {
        Some(j) => coefficients[j] * z,
        None => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelCoefficients {
    layout: BinLayout,
    coefficients: Vec<f64>,
}

/// Per-model bin layouts with one coefficient per bin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibratedScorer {
    models: BTreeMap<ModelId, ModelCoefficients>,
}

impl CalibratedScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: ModelId, layout: BinLayout, coefficients: Vec<f64>) -> Result<()> {
        if coefficients.len() != layout.bin_count() {
            return Err(Error::invalid(
                "coefficients",
                format!(
                    "expected {} coefficients for model `{model}`, got {}",
                    layout.bin_count(),
                    coefficients.len()
                ),
            ));
        }
        self.models.insert(model, ModelCoefficients { layout, coefficients });
        Ok(())
    }

    pub fn calibrate(&self, model: &ModelId, z: f64) -> Result<f64> {
        let m = self
            .models
            .get(model)
            .ok_or_else(|| Error::UnknownModel(model.clone()))?;
        Ok(calibrate_piecewise(&m.layout, &m.coefficients, z))
    }
}

/// Smallest magnitude kept by the top-`alpha` rule, or `None` for no finite scores.
///
/// Keeps the `ceil(alpha * n)` largest magnitudes; every score tied with the
/// cutoff is kept too.
pub fn top_alpha_cutoff(scores: &[f64], alpha: f64) -> Result<Option<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", format!("must be in (0, 1], got {alpha}")));
    }
    let mut mags: Vec<f64> = scores.iter().filter(|s| s.is_finite()).map(|s| s.abs()).collect();
    if mags.is_empty() {
        return Ok(None);
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    // the epsilon keeps e.g. 0.3 * 10 from rounding up to 4
    let keep = ((alpha * mags.len() as f64 - 1e-9).ceil() as usize).clamp(1, mags.len());
    Ok(Some(mags[keep - 1]))
}

/// Marks the examples whose `|score|` lies in the top-`alpha` fraction.
pub fn select_training_mask(scores: &[f64], alpha: f64) -> Result<Vec<bool>> {
    let cutoff = top_alpha_cutoff(scores, alpha)?;
    Ok(scores
        .iter()
        .map(|s| matches!(cutoff, Some(c) if s.is_finite() && s.abs() >= c))
        .collect())
}

/// Quantile bins over the top-`alpha` slice of a warm-up sample.
///
/// Scores below the selection cutoff land outside every bin, so they neither
/// train the model's cells nor contribute to its calibrated score.
pub fn fit_training_bins(warmup: &[f64], alpha: f64, k: usize) -> Result<BinLayout> {
    let mask = select_training_mask(warmup, alpha)?;
    let selected: Vec<f64> = warmup
        .iter()
        .zip(mask)
        .filter_map(|(&s, keep)| keep.then_some(s))
        .collect();
    fit_bins(&selected, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_bin_scorer(coefs: Vec<f64>) -> (CalibratedScorer, ModelId) {
        let id = ModelId::new("m");
        let mut scorer = CalibratedScorer::new();
        scorer
            .insert(id.clone(), BinLayout::new(vec![0.0, 0.5, 1.0]).unwrap(), coefs)
            .unwrap();
        (scorer, id)
    }

    #[test]
    fn calibrate_examples() {
        let (scorer, id) = two_bin_scorer(vec![1.0, 2.0]);
        assert_eq!(scorer.calibrate(&id, 0.25).unwrap(), 0.25);
        assert_eq!(scorer.calibrate(&id, 0.75).unwrap(), 1.5);
        assert_eq!(scorer.calibrate(&id, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn calibrate_unknown_model() {
        let (scorer, _) = two_bin_scorer(vec![1.0, 2.0]);
        assert_eq!(
            scorer.calibrate(&ModelId::new("nope"), 0.3),
            Err(Error::UnknownModel(ModelId::new("nope")))
        );
    }

    #[test]
    fn coefficient_count_must_match_bins() {
        let mut scorer = CalibratedScorer::new();
        let layout = BinLayout::new(vec![0.0, 1.0]).unwrap();
        assert!(scorer.insert(ModelId::new("m"), layout, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn training_mask_examples() {
        assert_eq!(
            select_training_mask(&[0.1, 0.9, 0.5, 0.7], 0.5).unwrap(),
            vec![false, true, false, true]
        );
        assert_eq!(select_training_mask(&[0.1, 0.9, 0.5], 1.0).unwrap(), vec![true; 3]);
        assert_eq!(select_training_mask(&[0.4; 8], 0.25).unwrap(), vec![true; 8]);
    }

    #[test]
    fn training_mask_uses_magnitude() {
        assert_eq!(
            select_training_mask(&[-0.9, 0.2, 0.5, -0.1], 0.5).unwrap(),
            vec![true, false, true, false]
        );
    }

    #[test]
    fn training_mask_rejects_bad_alpha() {
        assert!(select_training_mask(&[1.0], 0.0).is_err());
        assert!(select_training_mask(&[1.0], 1.5).is_err());
        assert!(select_training_mask(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn fractional_alpha_does_not_round_up() {
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mask = select_training_mask(&scores, 0.3).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 3);
    }

    #[test]
    fn training_bins_start_at_cutoff() {
        let warmup: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let layout = fit_training_bins(&warmup, 0.25, 4).unwrap();
        assert_eq!(layout.lower(), 0.76);
        assert_eq!(layout.upper(), 1.0);
        assert_eq!(layout.bin_count(), 4);
        assert_eq!(layout.bin_of(0.5), None);
        assert!(fit_training_bins(&[], 0.25, 4).is_err());
    }

    proptest! {
        #[test]
        fn linear_within_bin(z in 0.0f64..0.25, b0 in 0.0f64..5.0, b1 in 0.0f64..5.0) {
            // z and 2z both sit in [0, 0.5)
            let (scorer, id) = two_bin_scorer(vec![b0, b1]);
            let once = scorer.calibrate(&id, z).unwrap();
            let twice = scorer.calibrate(&id, 2.0 * z).unwrap();
            prop_assert!((twice - 2.0 * once).abs() <= 1e-12 * (1.0 + twice.abs()));
        }

        #[test]
        fn optimistic_coefficients_dominate(
            z in -0.5f64..2.0,
            b in prop::collection::vec(-2.0f64..2.0, 2),
            u in prop::collection::vec(0.0f64..2.0, 2),
        ) {
            let (point, id) = two_bin_scorer(b.clone());
            let (optimistic, _) = two_bin_scorer(vec![b[0] + u[0], b[1] + u[1]]);
            // dominance holds for the non-negative scores the models emit
            let z = z.max(0.0);
            prop_assert!(optimistic.calibrate(&id, z).unwrap() >= point.calibrate(&id, z).unwrap());
        }

        #[test]
        fn mask_invariant_under_increasing_transform(
            raw in prop::collection::vec(0u32..1000, 1..100),
            alpha in 0.01f64..=1.0,
            which in 0usize..3,
        ) {
            let scores: Vec<f64> = raw.iter().map(|&r| r as f64 / 1000.0).collect();
            // transforms keep scores non-negative so magnitude order is preserved
            let transformed: Vec<f64> = scores
                .iter()
                .map(|&s| match which {
                    0 => s.sqrt(),
                    1 => s.exp() - 1.0,
                    _ => 10.0 * s * s,
                })
                .collect();
            prop_assert_eq!(
                select_training_mask(&scores, alpha).unwrap(),
                select_training_mask(&transformed, alpha).unwrap()
            );
        }
    }
}
