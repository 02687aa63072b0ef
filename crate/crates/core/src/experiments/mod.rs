//! Experiment harness: configuration, runs, metrics and table output.

pub mod config;
pub mod emit;
pub mod metrics;
pub mod runner;
pub mod sweep;

pub use config::{AttackKind, ExperimentConfig, IssuanceMode, StopRule};
pub use emit::emit;
pub use metrics::{baseline_average, consensus_error, reports_to_consensus, time_to_consensus, FirstCost, RunMetrics};
pub use runner::{run, run_batch, Job, RunOutput};
pub use sweep::SweepMatrix;
