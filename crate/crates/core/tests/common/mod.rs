#![allow(dead_code)]

pub mod stats;

use colosim::attack::{repttack_specs, AttackConfig};
use colosim::cluster::{
    generate_cluster_with, ClusterGenConfig, ClusterState, InstanceId, LabelKey, LabelUniverse, LabelValue, Node,
    NodeId,
};
use colosim::scheduler::SchedulerConfig;
use colosim::workload::{
    generate_app_spec, AffinityRule, AppSpec, IdGen, Polarity, Role, RuleKind, WorkloadConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random cluster with residents, and a spec to schedule on it.
pub struct Case {
    pub cluster: ClusterState,
    pub spec: AppSpec,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cluster_config = ClusterGenConfig {
        node_count: rng.gen_range(1..=20),
        node_label_keys: rng.gen_range(0..=3),
        app_label_keys: rng.gen_range(0..=3),
        values_per_key: rng.gen_range(1..=3),
        node_label_presence: rng.gen_range(0.3..=1.0),
        cpu_choices: vec![2, 4, 8],
        memory_choices: vec![2, 4, 8],
        disk_choices: vec![4, 8],
        port_choices: vec![2, 4],
    };
    let mut cluster = generate_cluster_with(&cluster_config, &mut rng).unwrap();
    let universe = cluster.universe.clone();
    let workload = WorkloadConfig {
        p_m: 0.7,
        p_mn: rng.gen_range(0.0..=1.0),
        p_ma: rng.gen_range(0.0..=1.0),
        max_cpu: 3,
        max_memory: 3,
        max_disk: 3,
        max_ports: 2,
        ..WorkloadConfig::default()
    };
    let residents = rng.gen_range(0..30);
    for i in 0..residents {
        let spec = generate_app_spec(&workload, &universe, InstanceId(i), 0, &mut rng);
        let node = NodeId(rng.gen_range(0..cluster.nodes.len()) as u32);
        if cluster.nodes[node.0 as usize].can_fit(&spec.request) {
            cluster.allocate(node, spec.instance_id, spec.request, spec.own_labels).unwrap();
        }
    }
    let spec = generate_app_spec(&workload, &universe, InstanceId(1_000), 1, &mut rng);
    Case { cluster, spec }
}

fn node_has(node: &Node, key: LabelKey, value: LabelValue) -> bool {
    node.labels.iter().any(|(k, v)| k == key && v == value)
}

fn resident_has(node: &Node, key: LabelKey, value: LabelValue) -> bool {
    node.residents
        .values()
        .any(|r| r.labels.iter().any(|(k, v)| k == key && v == value))
}

fn used(node: &Node) -> [u64; 4] {
    let mut sum = [0u64; 4];
    for r in node.residents.values() {
        for (s, c) in sum.iter_mut().zip(r.request.components()) {
            *s += c as u64;
        }
    }
    sum
}

/// Rule check written from scratch against the resident list.
pub fn oracle_rule(rule: &AffinityRule, node: &Node) -> bool {
    let present = match rule.kind {
        RuleKind::Node => node_has(node, rule.label, rule.value),
        RuleKind::InterApp => resident_has(node, rule.label, rule.value),
    };
    (rule.polarity == Polarity::Affinity) == present
}

pub fn oracle_fits(spec: &AppSpec, node: &Node) -> bool {
    let used = used(node);
    let cap = node.capacity.components();
    let req = spec.request.components();
    (0..4).all(|d| used[d] + req[d] as u64 <= cap[d] as u64)
}

pub fn oracle_passes(spec: &AppSpec, node: &Node) -> bool {
    oracle_fits(spec, node) && spec.rules.iter().filter(|r| r.is_required()).all(|r| oracle_rule(r, node))
}

pub fn oracle_filter(spec: &AppSpec, cluster: &ClusterState) -> Vec<NodeId> {
    cluster
        .nodes
        .iter()
        .filter(|n| oracle_passes(spec, n))
        .map(|n| n.id)
        .collect()
}

/// Score evaluated by hand from capacity, residents and the preferred rules.
pub fn oracle_score(spec: &AppSpec, node: &Node, config: &SchedulerConfig) -> f64 {
    let used = used(node);
    let cap = node.capacity.components();
    let req = spec.request.components();
    let mut resource = 0.0;
    for d in 0..4 {
        if cap[d] > 0 {
            resource += (cap[d] as f64 - used[d] as f64 - req[d] as f64) / cap[d] as f64;
        }
    }
    let mut s = config.resource_score_weight * resource / 4.0;
    for rule in spec.rules.iter().filter(|r| !r.is_required()) {
        let ok = oracle_rule(rule, node);
        if rule.polarity == Polarity::Affinity && ok {
            s += config.preferred_match_weight;
        }
        if rule.polarity == Polarity::AntiAffinity && !ok {
            s -= config.preferred_anti_match_penalty;
        }
    }
    s
}

/// Bernoulli count within three standard deviations of its mean.
pub fn within_3_sigma(hits: u64, n: u64, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - mean).abs() <= 3.0 * sd
}

/// A normal, victim or attack spec with random rules and labels.
pub fn random_spec(seed: u64, universe: &LabelUniverse) -> AppSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let workload = WorkloadConfig {
        p_m: rng.gen(),
        p_mn: rng.gen(),
        p_ma: rng.gen(),
        lifetime_max: 500,
        ..WorkloadConfig::default()
    };
    let mut spec = generate_app_spec(&workload, universe, InstanceId(rng.gen_range(0..1_000_000)), rng.gen_range(0..1000), &mut rng);
    match rng.gen_range(0..3) {
        0 => spec,
        1 => {
            spec.role = Role::Victim;
            spec
        }
        _ => {
            let attack = AttackConfig { k: rng.gen_range(1..4), ..AttackConfig::default() };
            let group = LabelValue(rng.gen());
            let mut ids = IdGen::new(spec.instance_id.0 + 1);
            let slot = spec.submit_slot + 1;
            repttack_specs(&spec, &attack, universe.spreading_key().unwrap(), group, &mut ids, slot, spec.lifetime_slots, &mut rng)
                .pop()
                .unwrap()
        }
    }
}

pub fn normalized(mut spec: AppSpec) -> AppSpec {
    spec.rules.sort();
    spec
}
