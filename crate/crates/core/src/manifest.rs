//! Kubernetes-style pod manifests for generated specs.
//!
//! Only the label=value subset the simulator models is supported: node rules
//! become single-value `In` / `NotIn` expressions, inter-app rules become
//! pod (anti-)affinity terms selecting on one label. Parsing accepts what
//! emission produces plus a few equivalent spellings (`nodeSelector`,
//! single-value `In` selector expressions) and rejects everything else with
//! the offending constructs listed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::cluster::{InstanceId, KeyClass, LabelKey, LabelMap, LabelUniverse, LabelValue, ResourceVector};
use crate::error::{Error, Result};
use crate::workload::{AffinityRule, AppSpec, Polarity, Role, RuleKind, Strength};

pub const DEFAULT_TOPOLOGY_KEY: &str = "kubernetes.io/hostname";

const ANN_INSTANCE: &str = "colosim.io/instance-id";
const ANN_ROLE: &str = "colosim.io/role";
const ANN_SLOT: &str = "colosim.io/submit-slot";
const ANN_LIFETIME: &str = "colosim.io/lifetime-slots";

const MEMORY_UNIT_MI: u64 = 512;
const DISK_UNIT_MI: u64 = 16;
const FIRST_PORT: u32 = 8080;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestConfig {
    pub topology_key: String,
    /// Weight given to every preferred term, on the 1..=100 scale.
    pub preferred_weight: u32,
    /// Container images, picked by instance id.
    pub images: Vec<String>,
    pub name_prefix: String,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self {
            topology_key: DEFAULT_TOPOLOGY_KEY.to_string(),
            preferred_weight: 50,
            images: ["traefik", "nginx", "tomcat", "redis", "mongo", "wordpress"]
                .map(String::from)
                .to_vec(),
            name_prefix: "colosim".to_string(),
        }
    }
}

impl ManifestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=100).contains(&self.preferred_weight) {
            return Err(Error::Config("manifest preferred_weight must lie in 1..=100".into()));
        }
        if self.images.is_empty() {
            return Err(Error::Config("manifest image list is empty".into()));
        }
        if self.topology_key.is_empty() {
            return Err(Error::Config("manifest topology key is empty".into()));
        }
        Ok(())
    }
}

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Pod {
    api_version: String,
    kind: String,
    metadata: Metadata,
    spec: PodSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Metadata {
    name: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    labels: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    annotations: BTreeMap<String, String>,
    #[serde(flatten, skip_serializing)]
    _rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct PodSpec {
    containers: Vec<Container>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_selector: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    affinity: Option<Affinity>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Container {
    name: String,
    image: String,
    resources: Resources,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    ports: Vec<Port>,
    #[serde(flatten, skip_serializing)]
    _rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Resources {
    requests: BTreeMap<String, String>,
    #[serde(flatten, skip_serializing)]
    _rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct Port {
    container_port: u32,
    #[serde(flatten, skip_serializing)]
    _rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct Affinity {
    #[serde(skip_serializing_if = "Option::is_none")]
    node_affinity: Option<NodeAffinity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pod_affinity: Option<PodAffinity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pod_anti_affinity: Option<PodAffinity>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct NodeAffinity {
    #[serde(
        rename = "requiredDuringSchedulingIgnoredDuringExecution",
        skip_serializing_if = "Option::is_none"
    )]
    required: Option<NodeSelector>,
    #[serde(
        rename = "preferredDuringSchedulingIgnoredDuringExecution",
        skip_serializing_if = "Vec::is_empty"
    )]
    preferred: Vec<PreferredSchedulingTerm>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct NodeSelector {
    node_selector_terms: Vec<NodeSelectorTerm>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct NodeSelectorTerm {
    match_expressions: Vec<Requirement>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Requirement {
    key: String,
    operator: String,
    values: Vec<String>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct PreferredSchedulingTerm {
    weight: i64,
    preference: NodeSelectorTerm,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct PodAffinity {
    #[serde(
        rename = "requiredDuringSchedulingIgnoredDuringExecution",
        skip_serializing_if = "Vec::is_empty"
    )]
    required: Vec<PodAffinityTerm>,
    #[serde(
        rename = "preferredDuringSchedulingIgnoredDuringExecution",
        skip_serializing_if = "Vec::is_empty"
    )]
    preferred: Vec<WeightedPodAffinityTerm>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct PodAffinityTerm {
    label_selector: LabelSelector,
    topology_key: String,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct LabelSelector {
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    match_labels: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    match_expressions: Vec<Requirement>,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
struct WeightedPodAffinityTerm {
    weight: i64,
    pod_affinity_term: PodAffinityTerm,
    #[serde(flatten, skip_serializing)]
    rest: Extra,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Normal => "normal",
        Role::Victim => "victim",
        Role::Attack => "attack",
    }
}

fn parse_role(s: &str) -> Option<Role> {
    match s {
        "normal" => Some(Role::Normal),
        "victim" => Some(Role::Victim),
        "attack" => Some(Role::Attack),
        _ => None,
    }
}

fn requirement(universe: &LabelUniverse, rule: &AffinityRule) -> Requirement {
    Requirement {
        key: universe.key_name(rule.label).to_string(),
        operator: match rule.polarity {
            Polarity::Affinity => "In",
            Polarity::AntiAffinity => "NotIn",
        }
        .to_string(),
        values: vec![universe.value_name(rule.label, rule.value)],
        rest: Extra::new(),
    }
}

fn pod_term(universe: &LabelUniverse, rule: &AffinityRule, topology_key: &str) -> PodAffinityTerm {
    PodAffinityTerm {
        label_selector: LabelSelector {
            match_labels: [(
                universe.key_name(rule.label).to_string(),
                universe.value_name(rule.label, rule.value),
            )]
            .into(),
            ..Default::default()
        },
        topology_key: topology_key.to_string(),
        rest: Extra::new(),
    }
}

fn build_affinity(spec: &AppSpec, universe: &LabelUniverse, config: &ManifestConfig) -> Option<Affinity> {
    let mut node = NodeAffinity::default();
    let mut required_node = Vec::new();
    let mut pod = PodAffinity::default();
    let mut anti = PodAffinity::default();

    for rule in &spec.rules {
        match (rule.kind, rule.strength) {
            (RuleKind::Node, Strength::Required) => required_node.push(requirement(universe, rule)),
            (RuleKind::Node, Strength::Preferred) => node.preferred.push(PreferredSchedulingTerm {
                weight: config.preferred_weight as i64,
                preference: NodeSelectorTerm {
                    match_expressions: vec![requirement(universe, rule)],
                    rest: Extra::new(),
                },
                rest: Extra::new(),
            }),
            (RuleKind::InterApp, strength) => {
                let target = match rule.polarity {
                    Polarity::Affinity => &mut pod,
                    Polarity::AntiAffinity => &mut anti,
                };
                let term = pod_term(universe, rule, &config.topology_key);
                match strength {
                    Strength::Required => target.required.push(term),
                    Strength::Preferred => target.preferred.push(WeightedPodAffinityTerm {
                        weight: config.preferred_weight as i64,
                        pod_affinity_term: term,
                        rest: Extra::new(),
                    }),
                }
            }
        }
    }
    if !required_node.is_empty() {
        node.required = Some(NodeSelector {
            node_selector_terms: vec![NodeSelectorTerm {
                match_expressions: required_node,
                rest: Extra::new(),
            }],
            rest: Extra::new(),
        });
    }

    let some_pod = |p: PodAffinity| (!p.required.is_empty() || !p.preferred.is_empty()).then_some(p);
    let affinity = Affinity {
        node_affinity: (node.required.is_some() || !node.preferred.is_empty()).then_some(node),
        pod_affinity: some_pod(pod),
        pod_anti_affinity: some_pod(anti),
        rest: Extra::new(),
    };
    (affinity.node_affinity.is_some() || affinity.pod_affinity.is_some() || affinity.pod_anti_affinity.is_some())
        .then_some(affinity)
}

/// Renders `spec` as a YAML pod manifest.
pub fn to_pod_manifest(spec: &AppSpec, universe: &LabelUniverse, config: &ManifestConfig) -> Result<String> {
    config.validate()?;
    spec.validate(universe)?;

    let labels = spec
        .own_labels
        .iter()
        .map(|(k, v)| (universe.key_name(k).to_string(), universe.value_name(k, v)))
        .collect();
    let annotations = [
        (ANN_INSTANCE, spec.instance_id.to_string()),
        (ANN_ROLE, role_name(spec.role).to_string()),
        (ANN_SLOT, spec.submit_slot.to_string()),
        (ANN_LIFETIME, spec.lifetime_slots.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let r = spec.request;
    let requests = [
        ("cpu", r.cpu_cores.to_string()),
        ("memory", format!("{}Mi", r.memory as u64 * MEMORY_UNIT_MI)),
        ("ephemeral-storage", format!("{}Mi", r.disk as u64 * DISK_UNIT_MI)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let ports = (0..r.network_ports)
        .map(|i| Port {
            container_port: FIRST_PORT + i,
            _rest: Extra::new(),
        })
        .collect();
    let image = config.images[(spec.instance_id.0 % config.images.len() as u64) as usize].clone();

    let pod = Pod {
        api_version: "v1".into(),
        kind: "Pod".into(),
        metadata: Metadata {
            name: format!("{}-{}-{}", config.name_prefix, role_name(spec.role), spec.instance_id),
            labels,
            annotations,
            _rest: Extra::new(),
        },
        spec: PodSpec {
            containers: vec![Container {
                name: "main".into(),
                image,
                resources: Resources {
                    requests,
                    _rest: Extra::new(),
                },
                ports,
                _rest: Extra::new(),
            }],
            node_selector: None,
            affinity: build_affinity(spec, universe, config),
            rest: Extra::new(),
        },
    };
    serde_yaml::to_string(&pod).map_err(|e| Error::Manifest(e.to_string()))
}

/// Size in bytes of a Kubernetes quantity such as `1536Mi`, `2G` or `500m`.
fn quantity(s: &str) -> Option<f64> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    let (number, suffix) = s.split_at(split);
    let number: f64 = number.parse().ok()?;
    let factor = match suffix {
        "" => 1.0,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        "Ki" => 1024.0,
        "Mi" => 1024.0 * 1024.0,
        "Gi" => 1024.0 * 1024.0 * 1024.0,
        "Ti" => 1024.0 * 1024.0 * 1024.0 * 1024.0,
        _ => return None,
    };
    (number >= 0.0 && number.is_finite()).then_some(number * factor)
}

/// Whole units needed to cover `bytes`, at least one.
fn units(bytes: f64, unit: f64) -> u32 {
    ((bytes / unit - 1e-9).ceil() as u32).max(1)
}

/// Collects unsupported constructs while walking a parsed manifest.
struct Walk<'a> {
    universe: &'a mut LabelUniverse,
    topology_key: &'a str,
    problems: Vec<String>,
    rules: Vec<AffinityRule>,
}

impl Walk<'_> {
    fn extra(&mut self, path: &str, extra: &Extra) {
        for key in extra.keys() {
            self.problems.push(format!("{path}.{key}"));
        }
    }

    fn resolve(&mut self, path: &str, key: &str, value: &str, class: KeyClass) -> Option<(LabelKey, LabelValue)> {
        let class = match self.universe.key_by_name(key) {
            Some(k) if class == KeyClass::App && self.universe.class(k) == KeyClass::Spreading => KeyClass::Spreading,
            _ => class,
        };
        let resolved = self
            .universe
            .intern_key(key, class)
            .and_then(|k| Ok((k, self.universe.intern_value(k, value)?)));
        match resolved {
            Ok(pair) => Some(pair),
            Err(e) => {
                self.problems.push(format!("{path}: {e}"));
                None
            }
        }
    }

    fn node_requirement(&mut self, path: &str, req: &Requirement, strength: Strength) {
        self.extra(path, &req.rest);
        let polarity = match req.operator.as_str() {
            "In" => Polarity::Affinity,
            "NotIn" => Polarity::AntiAffinity,
            other => {
                self.problems.push(format!("{path}: operator `{other}`"));
                return;
            }
        };
        if req.values.len() != 1 {
            self.problems.push(format!("{path}: {} values (exactly one supported)", req.values.len()));
            return;
        }
        if let Some((label, value)) = self.resolve(path, &req.key, &req.values[0], KeyClass::Node) {
            self.rules.push(AffinityRule {
                kind: RuleKind::Node,
                polarity,
                strength,
                label,
                value,
            });
        }
    }

    fn node_affinity(&mut self, path: &str, node: &NodeAffinity) {
        self.extra(path, &node.rest);
        if let Some(required) = &node.required {
            let path = format!("{path}.requiredDuringSchedulingIgnoredDuringExecution");
            self.extra(&path, &required.rest);
            if required.node_selector_terms.len() > 1 {
                self.problems.push(format!(
                    "{path}.nodeSelectorTerms: {} alternative terms (one supported)",
                    required.node_selector_terms.len()
                ));
            }
            for (i, term) in required.node_selector_terms.iter().enumerate().take(1) {
                let path = format!("{path}.nodeSelectorTerms[{i}]");
                self.extra(&path, &term.rest);
                for (j, req) in term.match_expressions.iter().enumerate() {
                    self.node_requirement(&format!("{path}.matchExpressions[{j}]"), req, Strength::Required);
                }
            }
        }
        for (i, term) in node.preferred.iter().enumerate() {
            let path = format!("{path}.preferredDuringSchedulingIgnoredDuringExecution[{i}]");
            self.extra(&path, &term.rest);
            self.extra(&format!("{path}.preference"), &term.preference.rest);
            if term.preference.match_expressions.len() != 1 {
                self.problems.push(format!(
                    "{path}.preference: {} expressions (exactly one supported)",
                    term.preference.match_expressions.len()
                ));
                continue;
            }
            self.node_requirement(
                &format!("{path}.preference.matchExpressions[0]"),
                &term.preference.match_expressions[0],
                Strength::Preferred,
            );
        }
    }

    fn pod_term(&mut self, path: &str, term: &PodAffinityTerm, polarity: Polarity, strength: Strength) {
        self.extra(path, &term.rest);
        if term.topology_key != self.topology_key {
            self.problems.push(format!("{path}.topologyKey `{}`", term.topology_key));
        }
        let sel = &term.label_selector;
        self.extra(&format!("{path}.labelSelector"), &sel.rest);
        let mut pairs: Vec<(String, String)> = sel.match_labels.clone().into_iter().collect();
        for (j, req) in sel.match_expressions.iter().enumerate() {
            let rpath = format!("{path}.labelSelector.matchExpressions[{j}]");
            self.extra(&rpath, &req.rest);
            if req.operator != "In" || req.values.len() != 1 {
                self.problems
                    .push(format!("{rpath}: `{}` with {} values", req.operator, req.values.len()));
                continue;
            }
            pairs.push((req.key.clone(), req.values[0].clone()));
        }
        if pairs.len() != 1 {
            self.problems.push(format!(
                "{path}.labelSelector: selects on {} labels (exactly one supported)",
                pairs.len()
            ));
            return;
        }
        let (key, value) = &pairs[0];
        if let Some((label, value)) = self.resolve(path, key, value, KeyClass::App) {
            self.rules.push(AffinityRule {
                kind: RuleKind::InterApp,
                polarity,
                strength,
                label,
                value,
            });
        }
    }

    fn pod_affinity(&mut self, path: &str, pod: &PodAffinity, polarity: Polarity) {
        self.extra(path, &pod.rest);
        for (i, term) in pod.required.iter().enumerate() {
            self.pod_term(
                &format!("{path}.requiredDuringSchedulingIgnoredDuringExecution[{i}]"),
                term,
                polarity,
                Strength::Required,
            );
        }
        for (i, w) in pod.preferred.iter().enumerate() {
            let path = format!("{path}.preferredDuringSchedulingIgnoredDuringExecution[{i}]");
            self.extra(&path, &w.rest);
            self.pod_term(&format!("{path}.podAffinityTerm"), &w.pod_affinity_term, polarity, Strength::Preferred);
        }
    }
}

/// Parses a pod manifest back into a spec, registering unseen label keys
/// and values in `universe`.
pub fn parse_pod_manifest(doc: &str, universe: &mut LabelUniverse, config: &ManifestConfig) -> Result<AppSpec> {
    let pod: Pod = serde_yaml::from_str(doc).map_err(|e| Error::Manifest(format!("malformed manifest: {e}")))?;
    if pod.kind != "Pod" {
        return Err(Error::Manifest(format!("expected kind Pod, found `{}`", pod.kind)));
    }

    let mut walk = Walk {
        universe,
        topology_key: &config.topology_key,
        problems: Vec::new(),
        rules: Vec::new(),
    };

    let mut own_labels = LabelMap::new();
    for (key, value) in &pod.metadata.labels {
        if let Some((k, v)) = walk.resolve("metadata.labels", key, value, KeyClass::App) {
            own_labels.insert(k, v);
        }
    }

    for field in ["nodeName", "topologySpreadConstraints"] {
        if pod.spec.rest.contains_key(field) {
            walk.problems.push(format!("spec.{field}"));
        }
    }
    if let Some(selector) = &pod.spec.node_selector {
        for (key, value) in selector {
            if let Some((label, value)) = walk.resolve("spec.nodeSelector", key, value, KeyClass::Node) {
                walk.rules.push(AffinityRule {
                    kind: RuleKind::Node,
                    polarity: Polarity::Affinity,
                    strength: Strength::Required,
                    label,
                    value,
                });
            }
        }
    }
    if let Some(affinity) = &pod.spec.affinity {
        walk.extra("spec.affinity", &affinity.rest);
        if let Some(node) = &affinity.node_affinity {
            walk.node_affinity("spec.affinity.nodeAffinity", node);
        }
        if let Some(pod_aff) = &affinity.pod_affinity {
            walk.pod_affinity("spec.affinity.podAffinity", pod_aff, Polarity::Affinity);
        }
        if let Some(anti) = &affinity.pod_anti_affinity {
            walk.pod_affinity("spec.affinity.podAntiAffinity", anti, Polarity::AntiAffinity);
        }
    }

    let mut request = ResourceVector::default();
    let sum = |field: &mut u32, n: u32| *field = field.saturating_add(n);
    let mut seen = [false; 3];
    for (i, c) in pod.spec.containers.iter().enumerate() {
        for (name, raw) in &c.resources.requests {
            let path = format!("spec.containers[{i}].resources.requests.{name}");
            let Some(bytes) = quantity(raw) else {
                walk.problems.push(format!("{path}: quantity `{raw}`"));
                continue;
            };
            match name.as_str() {
                "cpu" => {
                    sum(&mut request.cpu_cores, units(bytes, 1.0));
                    seen[0] = true;
                }
                "memory" => {
                    sum(&mut request.memory, units(bytes, (MEMORY_UNIT_MI << 20) as f64));
                    seen[1] = true;
                }
                "ephemeral-storage" => {
                    sum(&mut request.disk, units(bytes, (DISK_UNIT_MI << 20) as f64));
                    seen[2] = true;
                }
                _ => {}
            }
        }
        request.network_ports += c.ports.len() as u32;
    }
    // an absent request still occupies the smallest unit
    for (seen, field) in seen.iter().zip([&mut request.cpu_cores, &mut request.memory, &mut request.disk]) {
        if !seen {
            *field = (*field).max(1);
        }
    }
    request.network_ports = request.network_ports.max(1);

    let rules = std::mem::take(&mut walk.rules);
    let mut problems = std::mem::take(&mut walk.problems);

    let ann = &pod.metadata.annotations;
    let number = |key: &str, problems: &mut Vec<String>| -> u64 {
        match ann.get(key).map(|v| v.parse::<u64>()) {
            None => 0,
            Some(Ok(n)) => n,
            Some(Err(_)) => {
                problems.push(format!("metadata.annotations.{key}: not an integer"));
                0
            }
        }
    };
    let instance_id = InstanceId(number(ANN_INSTANCE, &mut problems));
    let submit_slot = number(ANN_SLOT, &mut problems);
    let lifetime_slots = number(ANN_LIFETIME, &mut problems);
    let role = match ann.get(ANN_ROLE) {
        None => Role::Normal,
        Some(r) => parse_role(r).unwrap_or_else(|| {
            problems.push(format!("metadata.annotations.{ANN_ROLE}: unknown role `{r}`"));
            Role::Normal
        }),
    };

    if !problems.is_empty() {
        return Err(Error::Manifest(format!("unsupported constructs: {}", problems.join("; "))));
    }
    let spec = AppSpec {
        instance_id,
        request,
        own_labels,
        rules,
        role,
        submit_slot,
        lifetime_slots,
    };
    spec.validate(universe).map_err(|e| Error::Manifest(e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::spreading_rule;

    fn universe() -> LabelUniverse {
        LabelUniverse::generate(5, 5, 4)
    }

    fn bare(universe: &LabelUniverse) -> AppSpec {
        let app = universe.keys_of(KeyClass::App)[0];
        AppSpec {
            instance_id: InstanceId(7),
            request: ResourceVector::new(2, 3, 4, 2),
            own_labels: [(app, LabelValue(1))].into_iter().collect(),
            rules: Vec::new(),
            role: Role::Victim,
            submit_slot: 12,
            lifetime_slots: 9,
        }
    }

    #[test]
    fn zero_rule_spec_has_no_affinity_stanza() {
        let u = universe();
        let doc = to_pod_manifest(&bare(&u), &u, &ManifestConfig::default()).unwrap();
        assert!(!doc.contains("affinity"));
        assert!(doc.contains("memory: 1536Mi"));
        assert!(doc.contains("ephemeral-storage: 64Mi"));
        assert!(doc.contains("containerPort: 8081"));
        let mut u2 = u.clone();
        assert_eq!(parse_pod_manifest(&doc, &mut u2, &ManifestConfig::default()).unwrap(), bare(&u));
    }

    #[test]
    fn spreading_rule_becomes_required_pod_anti_affinity() {
        let u = universe();
        let key = u.spreading_key().unwrap();
        let mut spec = bare(&u);
        spec.role = Role::Attack;
        spec.own_labels.insert(key, LabelValue(0xdead_beef));
        spec.rules.push(spreading_rule(key, LabelValue(0xdead_beef)));
        let doc = to_pod_manifest(&spec, &u, &ManifestConfig::default()).unwrap();
        let v: Value = serde_yaml::from_str(&doc).unwrap();
        let term = &v["spec"]["affinity"]["podAntiAffinity"]["requiredDuringSchedulingIgnoredDuringExecution"][0];
        assert_eq!(term["labelSelector"]["matchLabels"]["colosim.io/spread"], Value::from("deadbeef"));
        assert_eq!(term["topologyKey"], Value::from(DEFAULT_TOPOLOGY_KEY));
        let mut u2 = u.clone();
        assert_eq!(parse_pod_manifest(&doc, &mut u2, &ManifestConfig::default()).unwrap(), spec);
    }

    #[test]
    fn single_value_in_expression_is_an_equality_rule() {
        let doc = r#"
apiVersion: v1
kind: Pod
metadata:
  name: web
  labels: {app: shop}
spec:
  containers:
    - name: web
      image: nginx
      resources:
        requests: {cpu: 500m, memory: 1Gi, ephemeral-storage: 100Mi}
  affinity:
    podAffinity:
      requiredDuringSchedulingIgnoredDuringExecution:
        - labelSelector:
            matchExpressions:
              - {key: tier, operator: In, values: [db]}
          topologyKey: kubernetes.io/hostname
"#;
        let mut u = universe();
        let spec = parse_pod_manifest(doc, &mut u, &ManifestConfig::default()).unwrap();
        assert_eq!(spec.request, ResourceVector::new(1, 2, 7, 1));
        assert_eq!(spec.rules.len(), 1);
        let r = spec.rules[0];
        assert_eq!((r.kind, r.polarity, r.strength), (RuleKind::InterApp, Polarity::Affinity, Strength::Required));
        assert_eq!(u.key_name(r.label), "tier");
        assert_eq!(u.value_name(r.label, r.value), "db");
    }

    #[test]
    fn unsupported_constructs_are_listed() {
        let doc = r#"
apiVersion: v1
kind: Pod
metadata: {name: x}
spec:
  containers: [{name: c, image: i}]
  affinity:
    nodeAffinity:
      requiredDuringSchedulingIgnoredDuringExecution:
        nodeSelectorTerms:
          - matchExpressions:
              - {key: zone, operator: Exists}
              - {key: gpu-type, operator: In, values: [a, b]}
    podAffinity:
      requiredDuringSchedulingIgnoredDuringExecution:
        - labelSelector: {matchLabels: {app: a}}
          topologyKey: topology.kubernetes.io/zone
          namespaces: [other]
"#;
        let mut u = universe();
        let err = parse_pod_manifest(doc, &mut u, &ManifestConfig::default()).unwrap_err();
        let Error::Manifest(msg) = err else { panic!("{err:?}") };
        assert!(msg.contains("operator `Exists`"), "{msg}");
        assert!(msg.contains("2 values"), "{msg}");
        assert!(msg.contains("topologyKey"), "{msg}");
        assert!(msg.contains("namespaces"), "{msg}");
    }

    #[test]
    fn malformed_documents_fail() {
        let mut u = universe();
        let c = ManifestConfig::default();
        assert!(matches!(parse_pod_manifest("::: not yaml [", &mut u, &c), Err(Error::Manifest(_))));
        assert!(matches!(
            parse_pod_manifest("apiVersion: v1\nkind: Service\nmetadata: {name: s}\nspec: {}\n", &mut u, &c),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn quantities() {
        assert_eq!(quantity("1536Mi"), Some(1536.0 * 1024.0 * 1024.0));
        assert_eq!(quantity("500m"), Some(0.5));
        assert_eq!(quantity("2"), Some(2.0));
        assert_eq!(quantity("1.5Gi").map(|b| units(b, (512u64 << 20) as f64)), Some(3));
        assert_eq!(quantity("12parsecs"), None);
    }
}
