//! Random application specifications for normal users and victims.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, KeyClass, LabelKey, LabelMap, LabelUniverse, LabelValue, ResourceVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Node,
    InterApp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Affinity,
    AntiAffinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Required,
    Preferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AffinityRule {
    pub kind: RuleKind,
    pub polarity: Polarity,
    pub strength: Strength,
    pub label: LabelKey,
    pub value: LabelValue,
}

impl AffinityRule {
    pub fn is_required(&self) -> bool {
        self.strength == Strength::Required
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Normal,
    Victim,
    Attack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSpec {
    pub instance_id: InstanceId,
    pub request: ResourceVector,
    pub own_labels: LabelMap,
    pub rules: Vec<AffinityRule>,
    pub role: Role,
    pub submit_slot: u64,
    pub lifetime_slots: u64,
}

impl AppSpec {
    pub fn required_rules(&self) -> impl Iterator<Item = &AffinityRule> {
        self.rules.iter().filter(|r| r.is_required())
    }

    pub fn preferred_rules(&self) -> impl Iterator<Item = &AffinityRule> {
        self.rules.iter().filter(|r| !r.is_required())
    }

    pub fn count_rules(&self, kind: RuleKind, strength: Strength) -> usize {
        self.rules
            .iter()
            .filter(|r| r.kind == kind && r.strength == strength)
            .count()
    }

    /// Checks the rule-uniqueness invariant and the key classes rules refer to.
    pub fn validate(&self, universe: &LabelUniverse) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for rule in &self.rules {
            if !seen.insert((rule.kind, rule.polarity, rule.strength, rule.label)) {
                return Err(Error::Config(format!(
                    "instance {} has duplicate rules for label `{}`",
                    self.instance_id,
                    universe.key_name(rule.label)
                )));
            }
            let class = universe.class(rule.label);
            let ok = match rule.kind {
                RuleKind::Node => class == KeyClass::Node,
                RuleKind::InterApp => matches!(class, KeyClass::App | KeyClass::Spreading),
            };
            if !ok {
                return Err(Error::Config(format!(
                    "{:?} rule on {class:?} label `{}`",
                    rule.kind,
                    universe.key_name(rule.label)
                )));
            }
        }
        Ok(())
    }
}

/// Exact per-category rule counts, written as four digits such as `2131`:
/// required node, preferred node, required inter-app, preferred inter-app.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AffinityPattern {
    pub req_node: usize,
    pub pref_node: usize,
    pub req_app: usize,
    pub pref_app: usize,
}

impl FromStr for AffinityPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<usize> = s
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Config(format!("affinity pattern `{s}` is not numeric")))?;
        if digits.len() != 4 {
            return Err(Error::Config(format!(
                "affinity pattern `{s}` must have exactly 4 digits"
            )));
        }
        Ok(Self {
            req_node: digits[0],
            pref_node: digits[1],
            req_app: digits[2],
            pref_app: digits[3],
        })
    }
}

impl TryFrom<String> for AffinityPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AffinityPattern> for String {
    fn from(p: AffinityPattern) -> String {
        p.to_string()
    }
}

impl fmt::Display for AffinityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}{}", self.req_node, self.pref_node, self.req_app, self.pref_app)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Probability an application carries each app-label key.
    pub p_m: f64,
    /// Probability of a node-affinity rule per node-label key.
    pub p_mn: f64,
    /// Probability of an inter-app rule per app-label key.
    pub p_ma: f64,
    /// When set, overrides `p_mn` / `p_ma` with exact per-category counts.
    pub pattern: Option<AffinityPattern>,
    pub max_cpu: u32,
    pub max_memory: u32,
    pub max_disk: u32,
    pub max_ports: u32,
    /// Probability a generated rule is affinity rather than anti-affinity.
    pub affinity_ratio: f64,
    /// Probability a generated rule is required rather than preferred.
    pub required_ratio: f64,
    pub lifetime_min: u64,
    pub lifetime_max: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            p_m: 0.5,
            p_mn: 0.5,
            p_ma: 0.5,
            pattern: None,
            max_cpu: 8,
            max_memory: 16,
            max_disk: 16,
            max_ports: 4,
            affinity_ratio: 0.55,
            required_ratio: 0.5,
            lifetime_min: 5,
            lifetime_max: 20,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_m", self.p_m),
            ("p_mn", self.p_mn),
            ("p_ma", self.p_ma),
            ("affinity_ratio", self.affinity_ratio),
            ("required_ratio", self.required_ratio),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("workload.{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, max) in [
            ("max_cpu", self.max_cpu),
            ("max_memory", self.max_memory),
            ("max_disk", self.max_disk),
            ("max_ports", self.max_ports),
        ] {
            if max < 1 {
                return Err(Error::Config(format!("workload.{name} must be at least 1")));
            }
        }
        if self.lifetime_min < 1 || self.lifetime_min > self.lifetime_max {
            return Err(Error::Config(
                "workload lifetime bounds must satisfy 1 <= lifetime_min <= lifetime_max".into(),
            ));
        }
        Ok(())
    }
}

/// Hands out increasing instance ids.
#[derive(Debug, Clone, Default)]
pub struct IdGen {
    next: u64,
}

impl IdGen {
    pub fn new(start: u64) -> Self {
        Self { next: start }
    }

    pub fn next_id(&mut self) -> InstanceId {
        let id = InstanceId(self.next);
        self.next += 1;
        id
    }
}

fn random_request<R: Rng + ?Sized>(config: &WorkloadConfig, rng: &mut R) -> ResourceVector {
    ResourceVector {
        cpu_cores: rng.gen_range(1..=config.max_cpu),
        memory: rng.gen_range(1..=config.max_memory),
        disk: rng.gen_range(1..=config.max_disk),
        network_ports: rng.gen_range(1..=config.max_ports),
    }
}

fn random_value<R: Rng + ?Sized>(universe: &LabelUniverse, key: LabelKey, rng: &mut R) -> LabelValue {
    LabelValue(rng.gen_range(0..universe.domain_size(key)) as u32)
}

fn random_polarity<R: Rng + ?Sized>(config: &WorkloadConfig, rng: &mut R) -> Polarity {
    if rng.gen_bool(config.affinity_ratio) {
        Polarity::Affinity
    } else {
        Polarity::AntiAffinity
    }
}

fn own_labels<R: Rng + ?Sized>(
    config: &WorkloadConfig,
    universe: &LabelUniverse,
    rng: &mut R,
) -> LabelMap {
    let mut labels = LabelMap::new();
    for key in universe.keys_of(KeyClass::App) {
        if rng.gen_bool(config.p_m) && universe.domain_size(key) > 0 {
            labels.insert(key, random_value(universe, key, rng));
        }
    }
    labels
}

/// Draws a spec the way the simulator's normal users submit them: each key
/// independently considered with its class's probability.
pub fn generate_app_spec<R: Rng + ?Sized>(
    config: &WorkloadConfig,
    universe: &LabelUniverse,
    instance_id: InstanceId,
    submit_slot: u64,
    rng: &mut R,
) -> AppSpec {
    let request = random_request(config, rng);
    let own_labels = own_labels(config, universe, rng);
    let mut rules = Vec::new();
    for (kind, class, p) in [
        (RuleKind::Node, KeyClass::Node, config.p_mn),
        (RuleKind::InterApp, KeyClass::App, config.p_ma),
    ] {
        for key in universe.keys_of(class) {
            if !rng.gen_bool(p) || universe.domain_size(key) == 0 {
                continue;
            }
            let polarity = random_polarity(config, rng);
            let strength = if rng.gen_bool(config.required_ratio) {
                Strength::Required
            } else {
                Strength::Preferred
            };
            rules.push(AffinityRule {
                kind,
                polarity,
                strength,
                label: key,
                value: random_value(universe, key, rng),
            });
        }
    }
    let lifetime_slots = rng.gen_range(config.lifetime_min..=config.lifetime_max);
    AppSpec {
        instance_id,
        request,
        own_labels,
        rules,
        role: Role::Normal,
        submit_slot,
        lifetime_slots,
    }
}

/// Draws a spec with exactly the pattern's rule counts. Keys are sampled
/// without replacement within each of the four categories.
pub fn generate_app_spec_patterned<R: Rng + ?Sized>(
    pattern: &AffinityPattern,
    config: &WorkloadConfig,
    universe: &LabelUniverse,
    instance_id: InstanceId,
    submit_slot: u64,
    rng: &mut R,
) -> Result<AppSpec> {
    let node_keys = universe.keys_of(KeyClass::Node);
    let app_keys = universe.keys_of(KeyClass::App);
    check_pattern(pattern, node_keys.len(), app_keys.len())?;

    let request = random_request(config, rng);
    let own_labels = own_labels(config, universe, rng);
    let mut rules = Vec::new();
    for (kind, strength, keys, count) in [
        (RuleKind::Node, Strength::Required, &node_keys, pattern.req_node),
        (RuleKind::Node, Strength::Preferred, &node_keys, pattern.pref_node),
        (RuleKind::InterApp, Strength::Required, &app_keys, pattern.req_app),
        (RuleKind::InterApp, Strength::Preferred, &app_keys, pattern.pref_app),
    ] {
        let mut picked: Vec<usize> = index::sample(rng, keys.len(), count).into_vec();
        picked.sort_unstable();
        for i in picked {
            let key = keys[i];
            let polarity = random_polarity(config, rng);
            rules.push(AffinityRule {
                kind,
                polarity,
                strength,
                label: key,
                value: random_value(universe, key, rng),
            });
        }
    }
    let lifetime_slots = rng.gen_range(config.lifetime_min..=config.lifetime_max);
    Ok(AppSpec {
        instance_id,
        request,
        own_labels,
        rules,
        role: Role::Normal,
        submit_slot,
        lifetime_slots,
    })
}

pub fn check_pattern(pattern: &AffinityPattern, node_keys: usize, app_keys: usize) -> Result<()> {
    let over = |count: usize, available: usize, what: &str| {
        if count > available {
            Err(Error::Config(format!(
                "pattern {pattern} asks for {count} {what} rules but only {available} keys exist"
            )))
        } else {
            Ok(())
        }
    };
    over(pattern.req_node, node_keys, "required node")?;
    over(pattern.pref_node, node_keys, "preferred node")?;
    over(pattern.req_app, app_keys, "required inter-app")?;
    over(pattern.pref_app, app_keys, "preferred inter-app")
}

/// Uniform sample without replacement, returned in population order.
pub fn victim_sample<R: Rng + ?Sized>(
    placed_normal: &[InstanceId],
    count: usize,
    rng: &mut R,
) -> Result<Vec<InstanceId>> {
    if count > placed_normal.len() {
        return Err(Error::Sampling {
            requested: count,
            available: placed_normal.len(),
        });
    }
    let mut picked = index::sample(rng, placed_normal.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| placed_normal[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn universe() -> LabelUniverse {
        LabelUniverse::generate(5, 5, 3)
    }

    #[test]
    fn zero_probabilities_give_bare_spec() {
        let config = WorkloadConfig {
            p_m: 0.0,
            p_mn: 0.0,
            p_ma: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..200 {
            let spec = generate_app_spec(&config, &universe(), InstanceId(i), 0, &mut rng);
            assert!(spec.own_labels.is_empty());
            assert!(spec.rules.is_empty());
            assert!(ResourceVector::MIN.fits_in(&spec.request));
        }
    }

    #[test]
    fn certain_node_rules_cover_every_key() {
        let config = WorkloadConfig {
            p_mn: 1.0,
            p_ma: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..100 {
            let spec = generate_app_spec(&config, &universe(), InstanceId(i), 0, &mut rng);
            assert_eq!(spec.rules.len(), 5);
            assert!(spec.rules.iter().all(|r| r.kind == RuleKind::Node));
            spec.validate(&universe()).unwrap();
        }
    }

    #[test]
    fn inter_app_rule_count_mean_matches_binomial() {
        // Binomial(5, 0.5): mean 2.5, sd of the mean over 10000 draws ~= 0.011.
        let config = WorkloadConfig {
            p_mn: 0.0,
            p_ma: 0.5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let total: usize = (0..10_000)
            .map(|i| {
                generate_app_spec(&config, &universe(), InstanceId(i), 0, &mut rng)
                    .rules
                    .len()
            })
            .sum();
        let mean = total as f64 / 10_000.0;
        assert!((2.4..=2.6).contains(&mean), "mean {mean}");
    }

    #[test]
    fn pattern_parsing() {
        let p: AffinityPattern = "2131".parse().unwrap();
        assert_eq!((p.req_node, p.pref_node, p.req_app, p.pref_app), (2, 1, 3, 1));
        assert_eq!(p.to_string(), "2131");
        assert!("213".parse::<AffinityPattern>().is_err());
        assert!("21x1".parse::<AffinityPattern>().is_err());
    }

    #[test]
    fn patterned_specs_have_exact_counts_for_all_small_patterns() {
        let config = WorkloadConfig::default();
        let u = universe();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut id = 0;
        for a in 0..=3 {
            for b in 0..=3 {
                for c in 0..=3 {
                    for d in 0..=3 {
                        let pattern = AffinityPattern { req_node: a, pref_node: b, req_app: c, pref_app: d };
                        id += 1;
                        let spec = generate_app_spec_patterned(
                            &pattern, &config, &u, InstanceId(id), 0, &mut rng,
                        )
                        .unwrap();
                        assert_eq!(spec.count_rules(RuleKind::Node, Strength::Required), a);
                        assert_eq!(spec.count_rules(RuleKind::Node, Strength::Preferred), b);
                        assert_eq!(spec.count_rules(RuleKind::InterApp, Strength::Required), c);
                        assert_eq!(spec.count_rules(RuleKind::InterApp, Strength::Preferred), d);
                        spec.validate(&u).unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn brute_force_and_exhaustive_patterns() {
        let config = WorkloadConfig::default();
        let u = universe();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let none = generate_app_spec_patterned(&"0000".parse().unwrap(), &config, &u, InstanceId(0), 0, &mut rng).unwrap();
        assert!(none.rules.is_empty());
        let full = generate_app_spec_patterned(&"5050".parse().unwrap(), &config, &u, InstanceId(1), 0, &mut rng).unwrap();
        assert_eq!(full.count_rules(RuleKind::Node, Strength::Required), 5);
        assert_eq!(full.count_rules(RuleKind::InterApp, Strength::Required), 5);
        assert_eq!(full.preferred_rules().count(), 0);
        let err = generate_app_spec_patterned(&"6000".parse().unwrap(), &config, &u, InstanceId(2), 0, &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn generated_specs_never_use_the_spreading_key() {
        let config = WorkloadConfig {
            p_m: 1.0,
            p_mn: 1.0,
            p_ma: 1.0,
            ..Default::default()
        };
        let u = universe();
        let spread = u.spreading_key().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..500 {
            let spec = generate_app_spec(&config, &u, InstanceId(i), 0, &mut rng);
            assert!(spec.own_labels.get(spread).is_none());
            assert!(spec.rules.iter().all(|r| r.label != spread));
        }
    }

    #[test]
    fn victim_sampling() {
        let population: Vec<InstanceId> = (0..800).map(InstanceId).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let victims = victim_sample(&population, 200, &mut rng).unwrap();
        assert_eq!(victims.len(), 200);
        let distinct: std::collections::HashSet<_> = victims.iter().collect();
        assert_eq!(distinct.len(), 200);

        assert!(victim_sample(&population, 0, &mut rng).unwrap().is_empty());
        assert_eq!(victim_sample(&population, 800, &mut rng).unwrap(), population);
        assert!(matches!(
            victim_sample(&population, 801, &mut rng),
            Err(Error::Sampling { requested: 801, available: 800 })
        ));
    }
}
