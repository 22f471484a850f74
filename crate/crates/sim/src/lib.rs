//! Discrete-event simulator for comparing review policies on synthetic,
//! drifting content streams.
//!
//! A [`ScenarioConfig`] describes arrivals, the violation mix over time, how
//! well each risk model detects each violation type over time, reviewer
//! capacity and ground-truth reach. [`generate_stream`] turns it into a
//! deterministic content stream; [`run`] closes the loop through the engine
//! (scoring, pooling, dispatch, labels, snapshots) under a [`PolicySpec`].

mod error;
pub mod experiment;
pub mod output;
pub mod policy;
pub mod run;
pub mod scenario;
pub mod stream;

pub use error::{Result, SimError};
pub use experiment::{ab_compare, paired_lift, sweep_capacity, tune, CapacityPoint, CapacitySweep, LiftEstimate, TuneGrid};
pub use policy::PolicySpec;
pub use run::{run, run_seed, run_stream, IntervalStats, SimResult};
pub use scenario::{builtin, ScenarioConfig};
pub use stream::{generate_stream, Arrival, EventStream};
