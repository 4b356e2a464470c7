use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::cluster::ClusterGenConfig;
use crate::error::{Error, Result};
use crate::migration::MigrationConfig;
use crate::scheduler::SchedulerConfig;
use crate::workload::{check_pattern, WorkloadConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub slots: u64,
    pub apps_per_slot: usize,
    /// Victims designated over the whole run, spread evenly across slots.
    pub victim_count: usize,
    /// Slots a rejected spec keeps retrying before it is dropped.
    pub retry_limit: u64,
    /// Independent seeds averaged per sweep point.
    pub repetitions: usize,
    pub cluster: ClusterGenConfig,
    pub workload: WorkloadConfig,
    pub attack: AttackConfig,
    pub scheduler: SchedulerConfig,
    pub migration: Option<MigrationConfig>,
    /// Optional grid in the `path=values;...` mini-language.
    pub sweep: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            slots: 1000,
            apps_per_slot: 10,
            victim_count: 4000,
            retry_limit: 3,
            repetitions: 1,
            cluster: ClusterGenConfig::default(),
            workload: WorkloadConfig::default(),
            attack: AttackConfig::default(),
            scheduler: SchedulerConfig::default(),
            migration: None,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slots < 1 {
            return Err(Error::Config("slots must be at least 1".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        self.cluster.validate()?;
        self.workload.validate()?;
        if let Some(pattern) = &self.workload.pattern {
            check_pattern(pattern, self.cluster.node_label_keys, self.cluster.app_label_keys)?;
        }
        self.attack.validate()?;
        self.scheduler.validate()?;
        if let Some(m) = &self.migration {
            m.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
