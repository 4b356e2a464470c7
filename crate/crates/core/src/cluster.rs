//! Cluster model: nodes with resource capacities, labels and resident
//! instances, plus random cluster generation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-dimensional resource quantity. Memory is counted in 512 MB units and
/// disk in 16 MB units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu_cores: u32,
    pub memory: u32,
    pub disk: u32,
    pub network_ports: u32,
}

impl ResourceVector {
    /// Smallest request any instance can make.
    pub const MIN: ResourceVector = ResourceVector::new(1, 1, 1, 1);

    pub const fn new(cpu_cores: u32, memory: u32, disk: u32, network_ports: u32) -> Self {
        Self {
            cpu_cores,
            memory,
            disk,
            network_ports,
        }
    }

    pub fn components(&self) -> [u32; 4] {
        [self.cpu_cores, self.memory, self.disk, self.network_ports]
    }

    /// Component-wise `self <= other`.
    pub fn fits_in(&self, other: &ResourceVector) -> bool {
        self.cpu_cores <= other.cpu_cores
            && self.memory <= other.memory
            && self.disk <= other.disk
            && self.network_ports <= other.network_ports
    }

    pub fn checked_add(&self, other: &ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            cpu_cores: self.cpu_cores.checked_add(other.cpu_cores)?,
            memory: self.memory.checked_add(other.memory)?,
            disk: self.disk.checked_add(other.disk)?,
            network_ports: self.network_ports.checked_add(other.network_ports)?,
        })
    }

    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            cpu_cores: self.cpu_cores.checked_sub(other.cpu_cores)?,
            memory: self.memory.checked_sub(other.memory)?,
            disk: self.disk.checked_sub(other.disk)?,
            network_ports: self.network_ports.checked_sub(other.network_ports)?,
        })
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        self.checked_add(&rhs).expect("resource vector overflow")
    }
}

impl Sub for ResourceVector {
    type Output = ResourceVector;

    fn sub(self, rhs: ResourceVector) -> ResourceVector {
        self.checked_sub(&rhs).expect("resource vector underflow")
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.cpu_cores, self.memory, self.disk, self.network_ports
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelKey(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelValue(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyClass {
    Node,
    App,
    /// Reserved for attack instances; never assigned to nodes or normal apps.
    Spreading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub name: String,
    pub class: KeyClass,
    /// Admissible values. Empty for the spreading key, whose values are raw
    /// 32-bit group identifiers.
    pub values: Vec<String>,
}

/// Every label key known to the cluster and the value domain of each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelUniverse {
    keys: Vec<KeyInfo>,
}

pub const DEFAULT_SPREADING_KEY: &str = "colosim.io/spread";

const DEFAULT_NODE_KEYS: [&str; 5] = ["cpu-type", "gpu-type", "disk-type", "memory-class", "zone"];
const DEFAULT_APP_KEYS: [&str; 5] = ["app", "tier", "team", "env", "release"];

fn value_names(count: usize) -> Vec<String> {
    (0..count)
        .map(|i| {
            if i < 26 {
                ((b'a' + i as u8) as char).to_string()
            } else {
                format!("v{i}")
            }
        })
        .collect()
}

fn generated_key_names(defaults: &[&str], prefix: &str, count: usize) -> Vec<String> {
    (0..count)
        .map(|i| match defaults.get(i) {
            Some(name) => name.to_string(),
            None => format!("{prefix}-{i}"),
        })
        .collect()
}

impl LabelUniverse {
    pub fn empty() -> Self {
        Self { keys: Vec::new() }
    }

    /// Universe with `node_keys` node labels, `app_keys` application labels
    /// and the reserved spreading label, `values_per_key` values each.
    pub fn generate(node_keys: usize, app_keys: usize, values_per_key: usize) -> Self {
        let mut universe = Self::empty();
        for name in generated_key_names(&DEFAULT_NODE_KEYS, "node-label", node_keys) {
            universe.push_key(name, KeyClass::Node, value_names(values_per_key));
        }
        for name in generated_key_names(&DEFAULT_APP_KEYS, "app-label", app_keys) {
            universe.push_key(name, KeyClass::App, value_names(values_per_key));
        }
        universe.push_key(DEFAULT_SPREADING_KEY.to_string(), KeyClass::Spreading, Vec::new());
        universe
    }

    fn push_key(&mut self, name: String, class: KeyClass, values: Vec<String>) -> LabelKey {
        let key = LabelKey(self.keys.len() as u16);
        self.keys.push(KeyInfo { name, class, values });
        key
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key_info(&self, key: LabelKey) -> &KeyInfo {
        &self.keys[key.0 as usize]
    }

    pub fn class(&self, key: LabelKey) -> KeyClass {
        self.key_info(key).class
    }

    pub fn keys(&self) -> impl Iterator<Item = (LabelKey, &KeyInfo)> {
        self.keys
            .iter()
            .enumerate()
            .map(|(i, info)| (LabelKey(i as u16), info))
    }

    pub fn keys_of(&self, class: KeyClass) -> Vec<LabelKey> {
        self.keys()
            .filter(|(_, info)| info.class == class)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn spreading_key(&self) -> Option<LabelKey> {
        self.keys_of(KeyClass::Spreading).first().copied()
    }

    pub fn domain_size(&self, key: LabelKey) -> usize {
        self.key_info(key).values.len()
    }

    pub fn key_by_name(&self, name: &str) -> Option<LabelKey> {
        self.keys()
            .find(|(_, info)| info.name == name)
            .map(|(k, _)| k)
    }

    pub fn key_name(&self, key: LabelKey) -> &str {
        &self.key_info(key).name
    }

    pub fn value_name(&self, key: LabelKey, value: LabelValue) -> String {
        let info = self.key_info(key);
        match info.class {
            KeyClass::Spreading => format!("{:08x}", value.0),
            _ => info
                .values
                .get(value.0 as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{}", value.0)),
        }
    }

    pub fn value_by_name(&self, key: LabelKey, name: &str) -> Option<LabelValue> {
        let info = self.key_info(key);
        match info.class {
            KeyClass::Spreading => parse_group_id(name).map(LabelValue),
            _ => info
                .values
                .iter()
                .position(|v| v == name)
                .map(|i| LabelValue(i as u32)),
        }
    }

    /// Looks up `name`, registering it with `class` when unknown. Fails if the
    /// key already exists with a different class.
    pub fn intern_key(&mut self, name: &str, class: KeyClass) -> Result<LabelKey> {
        if let Some(key) = self.key_by_name(name) {
            let existing = self.class(key);
            if existing != class {
                return Err(Error::Manifest(format!(
                    "label `{name}` is a {existing:?} label but is used as a {class:?} label"
                )));
            }
            return Ok(key);
        }
        if class == KeyClass::Spreading {
            return Err(Error::Manifest(format!(
                "unknown spreading label `{name}`"
            )));
        }
        Ok(self.push_key(name.to_string(), class, Vec::new()))
    }

    pub fn intern_value(&mut self, key: LabelKey, name: &str) -> Result<LabelValue> {
        if let Some(value) = self.value_by_name(key, name) {
            return Ok(value);
        }
        let info = &mut self.keys[key.0 as usize];
        if info.class == KeyClass::Spreading {
            return Err(Error::Manifest(format!(
                "spreading label value `{name}` is not an 8-digit hex group id"
            )));
        }
        info.values.push(name.to_string());
        Ok(LabelValue(info.values.len() as u32 - 1))
    }
}

fn parse_group_id(s: &str) -> Option<u32> {
    if s.len() == 8 && s.bytes().all(|b| b.is_ascii_hexdigit()) {
        u32::from_str_radix(s, 16).ok()
    } else {
        None
    }
}

/// Label-value pairs, at most one value per key. Kept sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMap(Vec<(LabelKey, LabelValue)>);

impl LabelMap {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn get(&self, key: LabelKey) -> Option<LabelValue> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    pub fn contains(&self, key: LabelKey, value: LabelValue) -> bool {
        self.get(key) == Some(value)
    }

    /// Sets `key` to `value`, replacing any previous value.
    pub fn insert(&mut self, key: LabelKey, value: LabelValue) -> Option<LabelValue> {
        match self.0.binary_search_by_key(&key, |(k, _)| *k) {
            Ok(i) => Some(std::mem::replace(&mut self.0[i].1, value)),
            Err(i) => {
                self.0.insert(i, (key, value));
                None
            }
        }
    }

    pub fn remove(&mut self, key: LabelKey) -> Option<LabelValue> {
        let i = self.0.iter().position(|(k, _)| *k == key)?;
        Some(self.0.remove(i).1)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelKey, LabelValue)> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<(LabelKey, LabelValue)> for LabelMap {
    fn from_iter<I: IntoIterator<Item = (LabelKey, LabelValue)>>(iter: I) -> Self {
        let mut map = LabelMap::new();
        for (k, v) in iter {
            map.insert(k, v);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resident {
    pub request: ResourceVector,
    pub labels: LabelMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub capacity: ResourceVector,
    pub allocated: ResourceVector,
    pub labels: LabelMap,
    pub residents: BTreeMap<InstanceId, Resident>,
    /// How many residents carry each label-value pair. Derived from `residents`.
    #[serde(skip)]
    resident_labels: HashMap<(LabelKey, LabelValue), u32>,
}

impl Node {
    pub fn new(id: NodeId, capacity: ResourceVector, labels: LabelMap) -> Self {
        Self {
            id,
            capacity,
            allocated: ResourceVector::default(),
            labels,
            residents: BTreeMap::new(),
            resident_labels: HashMap::new(),
        }
    }

    pub fn free(&self) -> ResourceVector {
        self.capacity - self.allocated
    }

    pub fn can_fit(&self, request: &ResourceVector) -> bool {
        match self.allocated.checked_add(request) {
            Some(total) => total.fits_in(&self.capacity),
            None => false,
        }
    }

    /// True if some resident instance carries `key=value`.
    pub fn hosts_label(&self, key: LabelKey, value: LabelValue) -> bool {
        self.resident_labels
            .get(&(key, value))
            .is_some_and(|&n| n > 0)
    }

    pub fn hosts(&self, instance: InstanceId) -> bool {
        self.residents.contains_key(&instance)
    }

    fn rebuild_label_index(&mut self) {
        self.resident_labels.clear();
        for resident in self.residents.values() {
            for pair in resident.labels.iter() {
                *self.resident_labels.entry(pair).or_default() += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterGenConfig {
    pub node_count: usize,
    pub node_label_keys: usize,
    pub app_label_keys: usize,
    pub values_per_key: usize,
    /// Probability that a node carries each node-label key.
    pub node_label_presence: f64,
    pub cpu_choices: Vec<u32>,
    pub memory_choices: Vec<u32>,
    pub disk_choices: Vec<u32>,
    pub port_choices: Vec<u32>,
}

impl Default for ClusterGenConfig {
    fn default() -> Self {
        Self {
            node_count: 100,
            node_label_keys: 5,
            app_label_keys: 5,
            values_per_key: 16,
            node_label_presence: 1.0,
            cpu_choices: vec![8, 16, 32, 64],
            memory_choices: vec![16, 32, 64, 128],
            disk_choices: vec![256, 512, 1024],
            port_choices: vec![8, 16],
        }
    }
}

impl ClusterGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::Config("cluster.node_count must be at least 1".into()));
        }
        if self.values_per_key == 0 && self.node_label_keys + self.app_label_keys > 0 {
            return Err(Error::Config("cluster.values_per_key must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.node_label_presence) {
            return Err(Error::Config(
                "cluster.node_label_presence must lie in [0, 1]".into(),
            ));
        }
        for (name, choices) in [
            ("cpu_choices", &self.cpu_choices),
            ("memory_choices", &self.memory_choices),
            ("disk_choices", &self.disk_choices),
            ("port_choices", &self.port_choices),
        ] {
            if choices.is_empty() {
                return Err(Error::Config(format!("cluster.{name} must not be empty")));
            }
        }
        Ok(())
    }
}

/// The whole cluster. Node ids equal their index in `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub nodes: Vec<Node>,
    pub universe: LabelUniverse,
    #[serde(skip)]
    locations: HashMap<InstanceId, NodeId>,
}

impl ClusterState {
    pub fn new(nodes: Vec<Node>, universe: LabelUniverse) -> Result<Self> {
        for (i, node) in nodes.iter().enumerate() {
            if node.id.0 as usize != i {
                return Err(Error::Config(format!(
                    "node ids must be dense and ordered, found {} at index {i}",
                    node.id
                )));
            }
        }
        let mut state = Self {
            nodes,
            universe,
            locations: HashMap::new(),
        };
        state.rebuild_indexes();
        Ok(state)
    }

    /// Recomputes derived indexes, needed after deserialization.
    pub fn rebuild_indexes(&mut self) {
        self.locations.clear();
        for node in &mut self.nodes {
            node.rebuild_label_index();
            for id in node.residents.keys() {
                self.locations.insert(*id, node.id);
            }
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0 as usize).ok_or(Error::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(id.0 as usize).ok_or(Error::UnknownNode(id))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn locate(&self, instance: InstanceId) -> Option<NodeId> {
        self.locations.get(&instance).copied()
    }

    pub fn instance_count(&self) -> usize {
        self.locations.len()
    }

    pub fn allocate(
        &mut self,
        node_id: NodeId,
        instance: InstanceId,
        request: ResourceVector,
        labels: LabelMap,
    ) -> Result<()> {
        if self.locations.contains_key(&instance) {
            return Err(Error::AlreadyPlaced(instance));
        }
        let node = self.node_mut(node_id)?;
        if !node.can_fit(&request) {
            return Err(Error::Capacity {
                node: node_id,
                instance,
            });
        }
        node.allocated = node.allocated + request;
        for pair in labels.iter() {
            *node.resident_labels.entry(pair).or_default() += 1;
        }
        node.residents.insert(instance, Resident { request, labels });
        self.locations.insert(instance, node_id);
        Ok(())
    }

    pub fn release(&mut self, node_id: NodeId, instance: InstanceId) -> Result<Resident> {
        let node = self.node_mut(node_id)?;
        let resident = node.residents.remove(&instance).ok_or(Error::NotResident {
            node: node_id,
            instance,
        })?;
        node.allocated = node.allocated - resident.request;
        for pair in resident.labels.iter() {
            if let Some(n) = node.resident_labels.get_mut(&pair) {
                *n -= 1;
                if *n == 0 {
                    node.resident_labels.remove(&pair);
                }
            }
        }
        self.locations.remove(&instance);
        Ok(resident)
    }

    /// Walks every node and checks the allocation invariants.
    pub fn audit(&self) -> Result<()> {
        let mut seen = 0usize;
        for node in &self.nodes {
            if !node.allocated.fits_in(&node.capacity) {
                return Err(Error::Invariant(format!(
                    "{} allocated {} exceeds capacity {}",
                    node.id, node.allocated, node.capacity
                )));
            }
            let sum = node
                .residents
                .values()
                .try_fold(ResourceVector::default(), |acc, r| acc.checked_add(&r.request))
                .ok_or_else(|| Error::Invariant(format!("{} resident sum overflows", node.id)))?;
            if sum != node.allocated {
                return Err(Error::Invariant(format!(
                    "{} allocated {} differs from resident sum {}",
                    node.id, node.allocated, sum
                )));
            }
            for id in node.residents.keys() {
                if self.locate(*id) != Some(node.id) {
                    return Err(Error::Invariant(format!(
                        "location index disagrees for instance {id} on {}",
                        node.id
                    )));
                }
            }
            seen += node.residents.len();
        }
        if seen != self.locations.len() {
            return Err(Error::Invariant(format!(
                "location index holds {} instances but nodes hold {seen}",
                self.locations.len()
            )));
        }
        Ok(())
    }

    /// Human-readable JSON snapshot with label names resolved.
    pub fn snapshot(&self) -> serde_json::Value {
        let labels_json = |labels: &LabelMap| {
            let map: serde_json::Map<String, serde_json::Value> = labels
                .iter()
                .map(|(k, v)| {
                    (
                        self.universe.key_name(k).to_string(),
                        serde_json::Value::String(self.universe.value_name(k, v)),
                    )
                })
                .collect();
            serde_json::Value::Object(map)
        };
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|node| {
                serde_json::json!({
                    "id": node.id.0,
                    "capacity": node.capacity,
                    "allocated": node.allocated,
                    "labels": labels_json(&node.labels),
                    "residents": node.residents.keys().map(|id| id.0).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({ "nodes": nodes })
    }
}

pub fn generate_cluster(config: &ClusterGenConfig, rng_seed: u64) -> Result<ClusterState> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    generate_cluster_with(config, &mut rng)
}

pub fn generate_cluster_with<R: Rng + ?Sized>(
    config: &ClusterGenConfig,
    rng: &mut R,
) -> Result<ClusterState> {
    config.validate()?;
    let universe = LabelUniverse::generate(
        config.node_label_keys,
        config.app_label_keys,
        config.values_per_key,
    );
    let node_keys = universe.keys_of(KeyClass::Node);
    let pick = |choices: &[u32], rng: &mut R| *choices.choose(rng).expect("validated non-empty");

    let mut nodes = Vec::with_capacity(config.node_count);
    for i in 0..config.node_count {
        let capacity = ResourceVector {
            cpu_cores: pick(&config.cpu_choices, rng),
            memory: pick(&config.memory_choices, rng),
            disk: pick(&config.disk_choices, rng),
            network_ports: pick(&config.port_choices, rng),
        };
        let mut labels = LabelMap::new();
        for &key in &node_keys {
            if rng.gen_bool(config.node_label_presence) {
                let value = rng.gen_range(0..universe.domain_size(key)) as u32;
                labels.insert(key, LabelValue(value));
            }
        }
        nodes.push(Node::new(NodeId(i as u32), capacity, labels));
    }
    ClusterState::new(nodes, universe)
}
