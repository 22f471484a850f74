//! Core engine for prioritizing content for human review.
//!
//! Heterogeneous risk-model scores are calibrated per model and per score
//! bin into a common severity scale. Calibration coefficients are learned
//! online from reviewer labels with a discounted, windowed least-squares
//! bandit, and scored optimistically (point estimate plus an upper
//! confidence bonus). Content waits in a pool ordered by optimistic
//! severity times the rate of change of its integrity value.

pub mod bandit;
pub mod calibration;
pub mod error;
pub mod iv;
pub mod registry;
pub mod scheduler;
mod types;

pub use bandit::{
    compute_ucb, Attribution, BanditConfig, BanditState, CalibrationCell, CellSnapshot,
    LabeledExample, ModelSnapshot, ParameterSnapshot, ScoreMode, SeverityEstimate, SigmaMode,
    UpdateReport,
};
pub use calibration::{calibrate_piecewise, fit_training_bins, select_training_mask, top_alpha_cutoff, CalibratedScorer};
pub use error::{Error, Result};
pub use iv::{HawkesParams, IntensityState, IvConfig, ViewHistory};
pub use registry::{fit_bins, BinLayout, OptimisticPrior, Registry, RegistryVersion, RiskModelDescriptor};
pub use scheduler::{
    ContentItem, IngestOutcome, Lifecycle, PoolMetrics, QueueEntry, ReviewOutcome, ReviewPool, ReviewerEvent,
    SchedulerConfig,
};
pub use types::{ContentId, Hours, ModelId};
