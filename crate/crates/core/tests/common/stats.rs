use std::collections::HashMap;

use colosim::attack::{repttack_specs, AttackConfig};
use colosim::cluster::{
    generate_cluster, ClusterGenConfig, ClusterState, InstanceId, LabelMap, LabelUniverse, LabelValue, Node, NodeId,
    ResourceVector,
};
use colosim::migration::{migrate_step, Destination, MigrationConfig};
use colosim::scheduler::{skip, Scheduler, SchedulerConfig};
use colosim::workload::{
    generate_app_spec, AffinityRule, AppSpec, IdGen, Polarity, Role, RuleKind, Strength, WorkloadConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DRAWS: u64 = 10_000;
pub const PROBABILITIES: [f64; 3] = [0.2, 0.5, 0.8];

/// One frequency observation: `hits` successes in `n` trials of a
/// Bernoulli(`p`) event.
#[derive(Debug, Clone)]
pub struct Observation {
    pub name: String,
    pub p: f64,
    pub hits: u64,
    pub n: u64,
}

fn rng(tag: u64, p: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(tag * 1000 + (p * 100.0) as u64)
}

fn specs(config: &WorkloadConfig, universe: &LabelUniverse, r: &mut ChaCha8Rng) -> Vec<AppSpec> {
    (0..DRAWS)
        .map(|i| generate_app_spec(config, universe, InstanceId(i), 0, r))
        .collect()
}

fn skip_draws(p: f64) -> u64 {
    let mut r = rng(1, p);
    (0..DRAWS).filter(|_| skip(p, &mut r)).count() as u64
}

/// A node that breaks the spec's only required rule survives the
/// mitigated filter exactly when its check is skipped.
fn mitigated_survival(p: f64) -> u64 {
    let universe = LabelUniverse::generate(1, 0, 2);
    let key = universe.keys().next().unwrap().0;
    let node = Node::new(NodeId(0), ResourceVector::new(4, 4, 4, 4), [(key, LabelValue(0))].into_iter().collect());
    let cluster = ClusterState::new(vec![node], universe.clone()).unwrap();
    let spec = AppSpec {
        instance_id: InstanceId(0),
        request: ResourceVector::MIN,
        own_labels: LabelMap::new(),
        rules: vec![AffinityRule {
            kind: RuleKind::Node,
            polarity: Polarity::Affinity,
            strength: Strength::Required,
            label: key,
            value: LabelValue(1),
        }],
        role: Role::Normal,
        submit_slot: 0,
        lifetime_slots: 1,
    };
    let config = SchedulerConfig { skip_probability: p, ..SchedulerConfig::default() };
    let scheduler = Scheduler::new(config, &universe).unwrap();
    let mut r = rng(2, p);
    (0..DRAWS)
        .filter(|_| !scheduler.filter_mitigated(&spec, &cluster, &mut r).is_empty())
        .count() as u64
}

fn node_label_presence(p: f64) -> u64 {
    let config = ClusterGenConfig {
        node_count: DRAWS as usize,
        node_label_keys: 1,
        app_label_keys: 0,
        node_label_presence: p,
        ..ClusterGenConfig::default()
    };
    let cluster = generate_cluster(&config, 3_000 + (p * 100.0) as u64).unwrap();
    cluster.nodes.iter().filter(|n| !n.labels.is_empty()).count() as u64
}

fn own_label_draws(p: f64) -> u64 {
    let universe = LabelUniverse::generate(0, 1, 4);
    let config = WorkloadConfig { p_m: p, p_mn: 0.0, p_ma: 0.0, ..WorkloadConfig::default() };
    specs(&config, &universe, &mut rng(4, p))
        .iter()
        .filter(|s| !s.own_labels.is_empty())
        .count() as u64
}

fn node_rule_draws(p: f64) -> u64 {
    let universe = LabelUniverse::generate(1, 1, 4);
    let config = WorkloadConfig { p_mn: p, p_ma: 0.0, ..WorkloadConfig::default() };
    specs(&config, &universe, &mut rng(5, p))
        .iter()
        .filter(|s| s.rules.iter().any(|r| r.kind == RuleKind::Node))
        .count() as u64
}

fn app_rule_draws(p: f64) -> u64 {
    let universe = LabelUniverse::generate(1, 1, 4);
    let config = WorkloadConfig { p_mn: 0.0, p_ma: p, ..WorkloadConfig::default() };
    specs(&config, &universe, &mut rng(6, p))
        .iter()
        .filter(|s| s.rules.iter().any(|r| r.kind == RuleKind::InterApp))
        .count() as u64
}

fn single_rule_specs(config: WorkloadConfig, tag: u64, p: f64) -> Vec<AffinityRule> {
    let universe = LabelUniverse::generate(1, 0, 4);
    let config = WorkloadConfig { p_mn: 1.0, p_ma: 0.0, ..config };
    specs(&config, &universe, &mut rng(tag, p))
        .into_iter()
        .map(|s| {
            assert_eq!(s.rules.len(), 1);
            s.rules[0]
        })
        .collect()
}

fn affinity_ratio_draws(p: f64) -> u64 {
    let config = WorkloadConfig { affinity_ratio: p, ..WorkloadConfig::default() };
    single_rule_specs(config, 7, p)
        .iter()
        .filter(|r| r.polarity == Polarity::Affinity)
        .count() as u64
}

fn required_ratio_draws(p: f64) -> u64 {
    let config = WorkloadConfig { required_ratio: p, ..WorkloadConfig::default() };
    single_rule_specs(config, 8, p)
        .iter()
        .filter(|r| r.strength == Strength::Required)
        .count() as u64
}

/// Rules kept by the replicas; each is dropped with probability `noise`.
fn replication_kept(noise: f64) -> u64 {
    let universe = LabelUniverse::generate(1, 0, 4);
    let key = universe.keys_of(colosim::cluster::KeyClass::Node)[0];
    let victim = AppSpec {
        instance_id: InstanceId(0),
        request: ResourceVector::new(2, 2, 2, 2),
        own_labels: LabelMap::new(),
        rules: vec![AffinityRule {
            kind: RuleKind::Node,
            polarity: Polarity::Affinity,
            strength: Strength::Required,
            label: key,
            value: LabelValue(0),
        }],
        role: Role::Victim,
        submit_slot: 0,
        lifetime_slots: 1,
    };
    let config = AttackConfig { k: DRAWS as usize, spreading: false, replication_noise: noise, ..AttackConfig::default() };
    let attacks = repttack_specs(
        &victim,
        &config,
        universe.spreading_key().unwrap(),
        LabelValue(9),
        &mut IdGen::new(1),
        0,
        1,
        &mut rng(9, noise),
    );
    attacks.iter().map(|a| a.rules.len() as u64).sum()
}

fn two_node_cluster(instances: u64) -> (ClusterState, Vec<InstanceId>, HashMap<InstanceId, AppSpec>) {
    let big = ResourceVector::new(1_000_000, 1_000_000, 1_000_000, 1_000_000);
    let nodes = (0..2).map(|i| Node::new(NodeId(i), big, LabelMap::new())).collect();
    let mut cluster = ClusterState::new(nodes, LabelUniverse::generate(0, 0, 0)).unwrap();
    let mut placed = Vec::new();
    let mut specs = HashMap::new();
    for i in 0..instances {
        let spec = AppSpec {
            instance_id: InstanceId(i),
            request: ResourceVector::MIN,
            own_labels: LabelMap::new(),
            rules: Vec::new(),
            role: Role::Normal,
            submit_slot: 0,
            lifetime_slots: 1,
        };
        cluster.allocate(NodeId((i % 2) as u32), spec.instance_id, spec.request, LabelMap::new()).unwrap();
        placed.push(spec.instance_id);
        specs.insert(spec.instance_id, spec);
    }
    (cluster, placed, specs)
}

fn migration_selected(p: f64) -> u64 {
    let (mut cluster, placed, specs) = two_node_cluster(DRAWS);
    let config = MigrationConfig { probability: p, destination: Destination::ClusterWide, ..MigrationConfig::default() };
    migrate_step(&mut cluster, &placed, &specs, &config, &mut rng(10, p)).unwrap().len() as u64
}

/// With two empty-ish nodes every cluster-wide move lands on node 0 half
/// of the time, whatever the source.
fn two_node_destination() -> u64 {
    let (mut cluster, placed, specs) = two_node_cluster(64);
    let config = MigrationConfig { probability: 1.0, destination: Destination::ClusterWide, ..MigrationConfig::default() };
    let mut r = rng(11, 0.5);
    let mut hits = 0;
    let mut moves = 0;
    while moves < DRAWS {
        for e in migrate_step(&mut cluster, &placed, &specs, &config, &mut r).unwrap() {
            if moves < DRAWS && e.to == NodeId(0) {
                hits += 1;
            }
            moves += 1;
        }
    }
    hits
}

pub fn observations() -> Vec<Observation> {
    type Gen = fn(f64) -> u64;
    let gens: [(&str, Gen, bool); 10] = [
        ("skip", skip_draws, false),
        ("mitigated filter skip", mitigated_survival, false),
        ("node label presence", node_label_presence, false),
        ("app label p_m", own_label_draws, false),
        ("node rule p_mn", node_rule_draws, false),
        ("inter-app rule p_ma", app_rule_draws, false),
        ("affinity ratio", affinity_ratio_draws, false),
        ("required ratio", required_ratio_draws, false),
        ("replication noise", replication_kept, true),
        ("migration selection", migration_selected, false),
    ];
    let mut out = Vec::new();
    for (name, f, complement) in gens {
        for p in PROBABILITIES {
            out.push(Observation {
                name: name.to_string(),
                p: if complement { 1.0 - p } else { p },
                hits: f(p),
                n: DRAWS,
            });
        }
    }
    out.push(Observation {
        name: "two-node cluster-wide destination".to_string(),
        p: 0.5,
        hits: two_node_destination(),
        n: DRAWS,
    });
    out
}
