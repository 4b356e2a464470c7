//! Filter-score scheduling and the randomized-filter mitigation.
//!
//! Filtering drops nodes that cannot hold the request or that break a
//! required rule. Scoring ranks the survivors by a least-requested resource
//! term plus fixed bonuses for satisfied preferences and picks the argmax,
//! breaking ties uniformly with the run's rng.
//!
//! The mitigated filter draws one skip flag per (node, required rule)
//! evaluation. A skipped check cannot eliminate the node. Resource checks are
//! never skipped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, LabelKey, Node, NodeId};
use crate::error::{Error, Result};
use crate::workload::{AffinityRule, AppSpec, Polarity, RuleKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub skip_probability: f64,
    pub preferred_match_weight: f64,
    pub preferred_anti_match_penalty: f64,
    pub resource_score_weight: f64,
    /// Label keys whose checks may be skipped. `None` means every label.
    pub skippable_labels: Option<Vec<String>>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            skip_probability: 0.0,
            preferred_match_weight: 1.0,
            preferred_anti_match_penalty: 1.0,
            resource_score_weight: 1.0,
            skippable_labels: None,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.skip_probability) {
            return Err(Error::Config(format!(
                "scheduler.skip_probability must lie in [0, 1], got {}",
                self.skip_probability
            )));
        }
        for (name, w) in [
            ("preferred_match_weight", self.preferred_match_weight),
            ("preferred_anti_match_penalty", self.preferred_anti_match_penalty),
            ("resource_score_weight", self.resource_score_weight),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("scheduler.{name} must be a finite value >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "node")]
pub enum Outcome {
    Placed(NodeId),
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub instance_id: crate::cluster::InstanceId,
    pub outcome: Outcome,
    pub candidate_count_after_filter: usize,
    pub score_of_chosen: Option<f64>,
    pub skipped_checks: u32,
}

impl ScheduleDecision {
    pub fn node(&self) -> Option<NodeId> {
        match self.outcome {
            Outcome::Placed(n) => Some(n),
            Outcome::Rejected => None,
        }
    }
}

pub fn rule_satisfied(rule: &AffinityRule, node: &Node) -> bool {
    let present = match rule.kind {
        RuleKind::Node => node.labels.contains(rule.label, rule.value),
        RuleKind::InterApp => node.hosts_label(rule.label, rule.value),
    };
    match rule.polarity {
        Polarity::Affinity => present,
        Polarity::AntiAffinity => !present,
    }
}

/// Number of required rules of `spec` that `node` breaks.
pub fn violated_required(spec: &AppSpec, node: &Node) -> usize {
    spec.required_rules()
        .filter(|r| !rule_satisfied(r, node))
        .count()
}

/// The unmitigated filter predicate for a single node.
pub fn node_passes(spec: &AppSpec, node: &Node) -> bool {
    node.can_fit(&spec.request) && spec.required_rules().all(|r| rule_satisfied(r, node))
}

pub fn filter(spec: &AppSpec, cluster: &ClusterState) -> Vec<NodeId> {
    cluster
        .nodes
        .iter()
        .filter(|node| node_passes(spec, node))
        .map(|node| node.id)
        .collect()
}

/// Resource-only filter: the set `filter_mitigated` converges to at `p_s = 1`.
pub fn filter_resources(spec: &AppSpec, cluster: &ClusterState) -> Vec<NodeId> {
    cluster
        .nodes
        .iter()
        .filter(|node| node.can_fit(&spec.request))
        .map(|node| node.id)
        .collect()
}

/// True with probability `p_s`. Draws nothing when `p_s` is 0 so that an
/// unmitigated run consumes the same random stream as plain scheduling.
pub fn skip<R: Rng + ?Sized>(p_s: f64, rng: &mut R) -> bool {
    if p_s <= 0.0 {
        return false;
    }
    rng.gen::<f64>() < p_s
}

/// Resource term of the score: mean over dimensions of `(free - request) / capacity`.
pub fn resource_score(spec: &AppSpec, node: &Node) -> f64 {
    let free = node.free().components();
    let cap = node.capacity.components();
    let req = spec.request.components();
    let mut sum = 0.0;
    for d in 0..4 {
        if cap[d] > 0 {
            sum += (free[d] as f64 - req[d] as f64) / cap[d] as f64;
        }
    }
    sum / 4.0
}

pub fn node_score(spec: &AppSpec, node: &Node, config: &SchedulerConfig) -> f64 {
    let mut score = config.resource_score_weight * resource_score(spec, node);
    for rule in spec.preferred_rules() {
        let satisfied = rule_satisfied(rule, node);
        match (rule.polarity, satisfied) {
            (Polarity::Affinity, true) => score += config.preferred_match_weight,
            (Polarity::AntiAffinity, false) => score -= config.preferred_anti_match_penalty,
            _ => {}
        }
    }
    score
}

/// Argmax of `node_score` over `candidates`, ties broken uniformly.
pub fn score<R: Rng + ?Sized>(
    spec: &AppSpec,
    candidates: &[NodeId],
    cluster: &ClusterState,
    config: &SchedulerConfig,
    rng: &mut R,
) -> Result<(NodeId, f64)> {
    let mut best = f64::NEG_INFINITY;
    let mut ties: Vec<NodeId> = Vec::new();
    for &id in candidates {
        let s = node_score(spec, cluster.node(id)?, config);
        if s > best {
            best = s;
            ties.clear();
            ties.push(id);
        } else if s == best {
            ties.push(id);
        }
    }
    match ties.len() {
        0 => Err(Error::EmptyCandidates),
        1 => Ok((ties[0], best)),
        n => Ok((ties[rng.gen_range(0..n)], best)),
    }
}

/// Scheduler with its skippable-label allowlist resolved against a universe.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    skippable: Vec<bool>,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, universe: &crate::cluster::LabelUniverse) -> Result<Self> {
        config.validate()?;
        let skippable = match &config.skippable_labels {
            None => vec![true; universe.len()],
            Some(names) => {
                let mut mask = vec![false; universe.len()];
                for name in names {
                    let key = universe.key_by_name(name).ok_or_else(|| {
                        Error::Config(format!("scheduler.skippable_labels: unknown label `{name}`"))
                    })?;
                    mask[key.0 as usize] = true;
                }
                mask
            }
        };
        Ok(Self { config, skippable })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    fn is_skippable(&self, key: LabelKey) -> bool {
        // keys interned after construction default to skippable only when
        // no allowlist was given
        self.skippable
            .get(key.0 as usize)
            .copied()
            .unwrap_or(self.config.skippable_labels.is_none())
    }

    /// Mitigated filter; also returns how many checks were skipped.
    pub fn filter_mitigated_counted<R: Rng + ?Sized>(
        &self,
        spec: &AppSpec,
        cluster: &ClusterState,
        rng: &mut R,
    ) -> (Vec<NodeId>, u32) {
        let p_s = self.config.skip_probability;
        let mut skipped = 0u32;
        let mut out = Vec::new();
        for node in &cluster.nodes {
            if !node.can_fit(&spec.request) {
                continue;
            }
            let mut keep = true;
            for rule in spec.required_rules() {
                if self.is_skippable(rule.label) && skip(p_s, rng) {
                    skipped += 1;
                    continue;
                }
                if !rule_satisfied(rule, node) {
                    keep = false;
                    break;
                }
            }
            if keep {
                out.push(node.id);
            }
        }
        (out, skipped)
    }

    pub fn filter_mitigated<R: Rng + ?Sized>(
        &self,
        spec: &AppSpec,
        cluster: &ClusterState,
        rng: &mut R,
    ) -> Vec<NodeId> {
        self.filter_mitigated_counted(spec, cluster, rng).0
    }

    pub fn score<R: Rng + ?Sized>(
        &self,
        spec: &AppSpec,
        candidates: &[NodeId],
        cluster: &ClusterState,
        rng: &mut R,
    ) -> Result<(NodeId, f64)> {
        score(spec, candidates, cluster, &self.config, rng)
    }

    /// Filter and score without touching the cluster.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        spec: &AppSpec,
        cluster: &ClusterState,
        rng: &mut R,
    ) -> Result<ScheduleDecision> {
        let (candidates, skipped_checks) = self.filter_mitigated_counted(spec, cluster, rng);
        if candidates.is_empty() {
            return Ok(ScheduleDecision {
                instance_id: spec.instance_id,
                outcome: Outcome::Rejected,
                candidate_count_after_filter: 0,
                score_of_chosen: None,
                skipped_checks,
            });
        }
        let (node, best) = self.score(spec, &candidates, cluster, rng)?;
        Ok(ScheduleDecision {
            instance_id: spec.instance_id,
            outcome: Outcome::Placed(node),
            candidate_count_after_filter: candidates.len(),
            score_of_chosen: Some(best),
            skipped_checks,
        })
    }

    /// Filter, score and allocate. An empty shortlist is a rejection, not an error.
    pub fn schedule<R: Rng + ?Sized>(
        &self,
        spec: &AppSpec,
        cluster: &mut ClusterState,
        rng: &mut R,
    ) -> Result<ScheduleDecision> {
        let decision = self.decide(spec, cluster, rng)?;
        if let Some(node) = decision.node() {
            cluster.allocate(node, spec.instance_id, spec.request, spec.own_labels.clone())?;
        }
        Ok(decision)
    }
}
