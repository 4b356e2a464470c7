//! Probabilistic instance migration and lifetime-overlap accounting.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::is_colocated;
use crate::cluster::{ClusterState, InstanceId, NodeId};
use crate::error::{Error, Result};
use crate::scheduler::{filter, filter_resources};
use crate::workload::AppSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    /// Uniform over the unmitigated filter output.
    Shortlist,
    /// Uniform over every node with room for the request.
    ClusterWide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MigrationConfig {
    pub probability: f64,
    pub destination: Destination,
    /// Percentage of the victim's lifetime it must share a node with an
    /// attack instance for the attack to count.
    pub success_threshold: f64,
    pub allow_self_migration: bool,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        Self {
            probability: 0.0,
            destination: Destination::Shortlist,
            success_threshold: 80.0,
            allow_self_migration: true,
        }
    }
}

impl MigrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config("migration.probability must lie in [0, 1]".into()));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 100.0) {
            return Err(Error::Config("migration.success_threshold must lie in (0, 100]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationEvent {
    pub instance_id: InstanceId,
    pub from: NodeId,
    pub to: NodeId,
}

/// Examines every placed instance in order; each moves with probability
/// `config.probability`. One uniform draw is consumed per instance whether or
/// not migration is enabled, so runs at different probabilities stay paired.
pub fn migrate_step<R: Rng + ?Sized>(
    cluster: &mut ClusterState,
    placed: &[InstanceId],
    specs: &HashMap<InstanceId, AppSpec>,
    config: &MigrationConfig,
    rng: &mut R,
) -> Result<Vec<MigrationEvent>> {
    let mut events = Vec::new();
    for &id in placed {
        let draw: f64 = rng.gen();
        if draw >= config.probability {
            continue;
        }
        let spec = specs
            .get(&id)
            .ok_or_else(|| Error::Invariant(format!("no spec for placed instance {id}")))?;
        let from = cluster
            .locate(id)
            .ok_or_else(|| Error::Invariant(format!("instance {id} listed as placed but not found")))?;
        cluster.release(from, id)?;
        let mut options = match config.destination {
            Destination::Shortlist => filter(spec, cluster),
            Destination::ClusterWide => filter_resources(spec, cluster),
        };
        if !config.allow_self_migration {
            options.retain(|n| *n != from);
        }
        let to = if options.is_empty() {
            from
        } else {
            options[rng.gen_range(0..options.len())]
        };
        cluster.allocate(to, id, spec.request, spec.own_labels.clone())?;
        events.push(MigrationEvent { instance_id: id, from, to });
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub slots_alive: u64,
    pub slots_colocated: u64,
}

impl OverlapEntry {
    pub fn ratio(&self) -> Option<f64> {
        (self.slots_alive > 0).then(|| self.slots_colocated as f64 / self.slots_alive as f64)
    }
}

/// Per-attack overlap counters, keyed by the attack's index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapLedger {
    entries: BTreeMap<u64, OverlapEntry>,
}

impl OverlapLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, attack: u64) -> Option<&OverlapEntry> {
        self.entries.get(&attack)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, &OverlapEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Counts one slot of the victim's life. Returns whether it was
    /// co-located with one of the attack's instances.
    pub fn record_overlap(
        &mut self,
        attack: u64,
        victim: InstanceId,
        attack_ids: &[InstanceId],
        cluster: &ClusterState,
    ) -> Result<bool> {
        let colocated = is_colocated(victim, attack_ids, cluster)?;
        let entry = self.entries.entry(attack).or_default();
        entry.slots_alive += 1;
        if colocated {
            entry.slots_colocated += 1;
        }
        Ok(colocated)
    }
}

/// Strictly more than `threshold` percent of the victim's life co-located.
pub fn lifetime_success(entry: &OverlapEntry, threshold: f64) -> Result<bool> {
    if entry.slots_alive == 0 {
        return Err(Error::NotApplicable("victim has no recorded lifetime".into()));
    }
    // integer form of colocated / alive > threshold / 100
    Ok(entry.slots_colocated as f64 * 100.0 > threshold * entry.slots_alive as f64)
}
