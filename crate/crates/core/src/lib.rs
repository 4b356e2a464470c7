//! Deterministic simulator of filter-score cloud schedulers for studying
//! affinity-guided co-location attacks, migration, and randomized filtering
//! as a mitigation.

pub mod attack;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod migration;
pub mod scheduler;
pub mod workload;

pub use error::{Error, Result};
