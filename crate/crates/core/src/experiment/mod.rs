//! Experiment harness: the slot-based driver, its metrics, the audit trail
//! and parameter sweeps.

pub mod audit;
pub mod config;
pub mod metrics;
pub mod run;
pub mod sweep;

pub use audit::{metrics_from_audit, AuditRecord};
pub use config::ExperimentConfig;
pub use metrics::{affinity_satisfaction, colocation_rate, mean_violated_specs, Metrics, Tally};
pub use run::{run, run_with_audit, RunOutput};
pub use sweep::{aggregate, derive_seed, run_point, sweep, write_csv, Grid, SweepRow};
