//! Repttack: attack specs built from a victim's specification.
//!
//! Every affinity rule of the victim is replicated, the resource request is
//! cut to the minimum, and when several instances are launched they carry a
//! private spreading label with a required inter-app anti-affinity on it so
//! no two of them share a node.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, InstanceId, LabelKey, LabelMap, LabelValue, ResourceVector};
use crate::error::{Error, Result};
use crate::workload::{AffinityRule, AppSpec, IdGen, Polarity, Role, RuleKind, Strength};

/// When attack instances enter the scheduling queue relative to the slot in
/// which the victim was placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTiming {
    SameSlot,
    NextSlot,
    Delay(u64),
}

impl AttackTiming {
    pub fn offset(&self) -> u64 {
        match self {
            AttackTiming::SameSlot => 0,
            AttackTiming::NextSlot => 1,
            AttackTiming::Delay(d) => *d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Number of attack instances per victim.
    pub k: usize,
    pub spreading: bool,
    /// Probability each victim rule is dropped from the replica.
    pub replication_noise: f64,
    pub timing: AttackTiming,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            k: 1,
            spreading: true,
            replication_noise: 0.0,
            timing: AttackTiming::NextSlot,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("attack.k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.replication_noise) {
            return Err(Error::Config("attack.replication_noise must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Builds the `k` attack specs for one victim. `spreading_key` is the
/// cluster's reserved key and `group` the attack's private value for it.
#[allow(clippy::too_many_arguments)]
pub fn repttack_specs<R: Rng + ?Sized>(
    victim: &AppSpec,
    config: &AttackConfig,
    spreading_key: LabelKey,
    group: LabelValue,
    ids: &mut IdGen,
    submit_slot: u64,
    lifetime_slots: u64,
    rng: &mut R,
) -> Vec<AppSpec> {
    let mut own_labels = LabelMap::new();
    own_labels.insert(spreading_key, group);
    (0..config.k)
        .map(|_| {
            let mut rules: Vec<AffinityRule> = victim
                .rules
                .iter()
                .filter(|_| config.replication_noise <= 0.0 || !rng.gen_bool(config.replication_noise))
                .copied()
                .collect();
            if config.spreading && config.k > 1 {
                rules.push(spreading_rule(spreading_key, group));
            }
            AppSpec {
                instance_id: ids.next_id(),
                request: ResourceVector::MIN,
                own_labels: own_labels.clone(),
                rules,
                role: Role::Attack,
                submit_slot,
                lifetime_slots,
            }
        })
        .collect()
}

pub fn spreading_rule(key: LabelKey, group: LabelValue) -> AffinityRule {
    AffinityRule {
        kind: RuleKind::InterApp,
        polarity: Polarity::AntiAffinity,
        strength: Strength::Required,
        label: key,
        value: group,
    }
}

/// True iff some attack instance sits on the victim's node. Errors with
/// `NotApplicable` when the victim is not placed.
pub fn is_colocated(victim: InstanceId, attack_ids: &[InstanceId], cluster: &ClusterState) -> Result<bool> {
    let node = cluster
        .locate(victim)
        .ok_or_else(|| Error::NotApplicable(format!("victim {victim} is not placed")))?;
    Ok(attack_ids.iter().any(|id| cluster.locate(*id) == Some(node)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{generate_cluster, ClusterGenConfig, KeyClass, LabelUniverse, NodeId};
    use crate::scheduler::{Scheduler, SchedulerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn victim(universe: &LabelUniverse, rules: Vec<AffinityRule>) -> AppSpec {
        let app = universe.keys_of(KeyClass::App)[1];
        AppSpec {
            instance_id: InstanceId(1),
            request: ResourceVector::new(8, 16, 16, 4),
            own_labels: [(app, LabelValue(0))].into_iter().collect(),
            rules,
            role: Role::Victim,
            submit_slot: 3,
            lifetime_slots: 100,
        }
    }

    #[test]
    fn single_instance_replicates_rules_without_spreading() {
        let u = LabelUniverse::generate(5, 5, 3);
        let gpu = u.key_by_name("gpu-type").unwrap();
        let tier = u.key_by_name("tier").unwrap();
        let rules = vec![
            AffinityRule { kind: RuleKind::Node, polarity: Polarity::Affinity, strength: Strength::Required, label: gpu, value: LabelValue(2) },
            AffinityRule { kind: RuleKind::InterApp, polarity: Polarity::Affinity, strength: Strength::Preferred, label: tier, value: LabelValue(1) },
        ];
        let v = victim(&u, rules.clone());
        let spread = u.spreading_key().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = repttack_specs(&v, &AttackConfig::default(), spread, LabelValue(0xabcd), &mut IdGen::new(10), 4, 96, &mut rng);
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].rules, rules);
        assert_eq!(specs[0].request, ResourceVector::MIN);
        assert_eq!(specs[0].role, Role::Attack);
        assert_eq!(specs[0].own_labels.get(spread), Some(LabelValue(0xabcd)));
    }

    #[test]
    fn empty_victim_gets_only_spreading_rule() {
        let u = LabelUniverse::generate(5, 5, 3);
        let v = victim(&u, vec![]);
        let spread = u.spreading_key().unwrap();
        let config = AttackConfig { k: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = repttack_specs(&v, &config, spread, LabelValue(7), &mut IdGen::new(10), 4, 96, &mut rng);
        assert_eq!(specs.len(), 3);
        let ids: std::collections::HashSet<_> = specs.iter().map(|s| s.instance_id).collect();
        assert_eq!(ids.len(), 3);
        for s in &specs {
            assert_eq!(s.rules, vec![spreading_rule(spread, LabelValue(7))]);
            assert_eq!(s.request, ResourceVector::MIN);
        }
    }

    #[test]
    fn full_noise_drops_every_victim_rule() {
        let u = LabelUniverse::generate(5, 5, 3);
        let gpu = u.key_by_name("gpu-type").unwrap();
        let v = victim(&u, vec![AffinityRule { kind: RuleKind::Node, polarity: Polarity::Affinity, strength: Strength::Required, label: gpu, value: LabelValue(0) }]);
        let config = AttackConfig { k: 2, replication_noise: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = repttack_specs(&v, &config, u.spreading_key().unwrap(), LabelValue(1), &mut IdGen::new(10), 0, 5, &mut rng);
        assert!(specs.iter().all(|s| s.rules.len() == 1));
    }

    #[test]
    fn spreading_instances_land_on_distinct_nodes() {
        let mut cluster = generate_cluster(&ClusterGenConfig::default(), 5).unwrap();
        let v = victim(&cluster.universe, vec![]);
        let spread = cluster.universe.spreading_key().unwrap();
        let config = AttackConfig { k: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let specs = repttack_specs(&v, &config, spread, LabelValue(3), &mut IdGen::new(10), 0, 5, &mut rng);
        let sched = Scheduler::new(SchedulerConfig::default(), &cluster.universe).unwrap();
        let mut nodes = Vec::new();
        for s in &specs {
            nodes.push(sched.schedule(s, &mut cluster, &mut rng).unwrap().node().unwrap());
        }
        let distinct: std::collections::HashSet<NodeId> = nodes.iter().copied().collect();
        assert_eq!(distinct.len(), 5);
        cluster.audit().unwrap();
    }

    #[test]
    fn colocation_checks() {
        let mut cluster = generate_cluster(&ClusterGenConfig { node_count: 3, ..Default::default() }, 1).unwrap();
        let put = |c: &mut ClusterState, node: u32, id: u64| {
            c.allocate(NodeId(node), InstanceId(id), ResourceVector::MIN, LabelMap::new()).unwrap()
        };
        put(&mut cluster, 0, 1);
        put(&mut cluster, 0, 2);
        put(&mut cluster, 1, 3);
        put(&mut cluster, 2, 4);
        assert!(is_colocated(InstanceId(1), &[InstanceId(2)], &cluster).unwrap());
        assert!(!is_colocated(InstanceId(1), &[], &cluster).unwrap());
        assert!(!is_colocated(InstanceId(1), &[InstanceId(99)], &cluster).unwrap());
        assert!(is_colocated(InstanceId(1), &[InstanceId(3), InstanceId(2), InstanceId(4)], &cluster).unwrap());
        assert!(matches!(is_colocated(InstanceId(50), &[InstanceId(2)], &cluster), Err(Error::NotApplicable(_))));
    }
}
