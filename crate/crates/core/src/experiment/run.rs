//! Slot-based execution driver.
//!
//! Each slot runs in a fixed order: expire instances whose lifetime ended,
//! schedule carried-over retries and the slot's fresh submissions, designate
//! victims among the slot's new placements, schedule the attack instances due
//! now, migrate, then record victim/attacker overlap.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::repttack_specs;
use crate::cluster::{generate_cluster_with, ClusterState, InstanceId, LabelKey, LabelValue};
use crate::error::{Error, Result};
use crate::migration::{lifetime_success, migrate_step, OverlapLedger};
use crate::scheduler::{violated_required, Scheduler};
use crate::workload::{
    generate_app_spec, generate_app_spec_patterned, victim_sample, AppSpec, IdGen, Role,
};

use super::audit::AuditRecord;
use super::config::ExperimentConfig;
use super::metrics::{Metrics, Tally};

// Independent ChaCha streams per concern, so that e.g. enabling migration does
// not perturb workload generation or scheduling draws.
const STREAM_CLUSTER: u64 = 0;
const STREAM_WORKLOAD: u64 = 1;
const STREAM_SCHEDULER: u64 = 2;
const STREAM_ATTACK: u64 = 3;
const STREAM_MIGRATION: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub audit: Option<Vec<AuditRecord>>,
}

pub fn run(config: &ExperimentConfig) -> Result<Metrics> {
    Ok(run_with_audit(config, false)?.metrics)
}

pub fn run_with_audit(config: &ExperimentConfig, collect_audit: bool) -> Result<RunOutput> {
    config.validate()?;
    let mut sim = Sim::new(config, collect_audit)?;
    for slot in 0..config.slots {
        sim.step(slot)?;
    }
    let metrics = sim.finish()?;
    Ok(RunOutput {
        metrics,
        audit: sim.audit,
    })
}

struct Pending {
    spec: AppSpec,
    first_slot: u64,
    attempts: u32,
}

struct AttackState {
    victim: InstanceId,
    instances: Vec<InstanceId>,
    due_slot: u64,
    counted: bool,
    hit: bool,
    victim_alive: bool,
}

struct Sim<'a> {
    config: &'a ExperimentConfig,
    cluster: ClusterState,
    scheduler: Scheduler,
    spreading_key: LabelKey,
    ids: IdGen,
    rng_workload: ChaCha8Rng,
    rng_sched: ChaCha8Rng,
    rng_attack: ChaCha8Rng,
    rng_migration: ChaCha8Rng,
    /// Specs of every placed or queued instance.
    specs: HashMap<InstanceId, AppSpec>,
    placement_order: BTreeMap<u64, InstanceId>,
    seq_of: HashMap<InstanceId, u64>,
    next_seq: u64,
    expiry: BTreeMap<u64, Vec<InstanceId>>,
    expiry_of: HashMap<InstanceId, u64>,
    retry: Vec<Pending>,
    due_attacks: BTreeMap<u64, Vec<Pending>>,
    attacks: Vec<AttackState>,
    attack_of: HashMap<InstanceId, u64>,
    attack_of_victim: HashMap<InstanceId, u64>,
    used_groups: HashSet<u32>,
    victim_deficit: usize,
    ledger: OverlapLedger,
    tally: Tally,
    audit: Option<Vec<AuditRecord>>,
}

impl<'a> Sim<'a> {
    fn new(config: &'a ExperimentConfig, collect_audit: bool) -> Result<Self> {
        let mut rng_cluster = stream(config.seed, STREAM_CLUSTER);
        let cluster = generate_cluster_with(&config.cluster, &mut rng_cluster)?;
        let scheduler = Scheduler::new(config.scheduler.clone(), &cluster.universe)?;
        let spreading_key = cluster
            .universe
            .spreading_key()
            .ok_or_else(|| Error::Config("label universe lacks a spreading key".into()))?;
        Ok(Self {
            config,
            cluster,
            scheduler,
            spreading_key,
            ids: IdGen::new(1),
            rng_workload: stream(config.seed, STREAM_WORKLOAD),
            rng_sched: stream(config.seed, STREAM_SCHEDULER),
            rng_attack: stream(config.seed, STREAM_ATTACK),
            rng_migration: stream(config.seed, STREAM_MIGRATION),
            specs: HashMap::new(),
            placement_order: BTreeMap::new(),
            seq_of: HashMap::new(),
            next_seq: 0,
            expiry: BTreeMap::new(),
            expiry_of: HashMap::new(),
            retry: Vec::new(),
            due_attacks: BTreeMap::new(),
            attacks: Vec::new(),
            attack_of: HashMap::new(),
            attack_of_victim: HashMap::new(),
            used_groups: HashSet::new(),
            victim_deficit: 0,
            ledger: OverlapLedger::new(),
            tally: Tally::default(),
            audit: collect_audit.then(Vec::new),
        })
    }

    fn log(&mut self, record: AuditRecord) {
        if let Some(audit) = &mut self.audit {
            audit.push(record);
        }
    }

    fn step(&mut self, slot: u64) -> Result<()> {
        self.expire(slot)?;

        let mut queue = std::mem::take(&mut self.retry);
        for _ in 0..self.config.apps_per_slot {
            let id = self.ids.next_id();
            let spec = match &self.config.workload.pattern {
                Some(p) => generate_app_spec_patterned(
                    p,
                    &self.config.workload,
                    &self.cluster.universe,
                    id,
                    slot,
                    &mut self.rng_workload,
                )?,
                None => generate_app_spec(
                    &self.config.workload,
                    &self.cluster.universe,
                    id,
                    slot,
                    &mut self.rng_workload,
                ),
            };
            queue.push(Pending { spec, first_slot: slot, attempts: 0 });
        }
        let placed_now = self.process(queue, slot)?;

        self.designate_victims(slot, &placed_now)?;
        let attacks_now = self.submit_due_attacks(slot);
        self.process(attacks_now, slot)?;

        if let Some(m) = &self.config.migration {
            let placed: Vec<InstanceId> = self.placement_order.values().copied().collect();
            let events = migrate_step(&mut self.cluster, &placed, &self.specs, m, &mut self.rng_migration)?;
            for e in events {
                self.log(AuditRecord::Migration { slot, instance: e.instance_id, from: e.from, to: e.to });
            }
            self.record_overlaps(slot)?;
        }

        self.cluster.audit()
    }

    fn expire(&mut self, slot: u64) -> Result<()> {
        let Some(ids) = self.expiry.remove(&slot) else {
            return Ok(());
        };
        for id in ids {
            let node = self
                .cluster
                .locate(id)
                .ok_or_else(|| Error::Invariant(format!("expiring instance {id} is not placed")))?;
            self.cluster.release(node, id)?;
            self.specs.remove(&id);
            self.expiry_of.remove(&id);
            if let Some(seq) = self.seq_of.remove(&id) {
                self.placement_order.remove(&seq);
            }
            if let Some(&a) = self.attack_of_victim.get(&id) {
                self.attacks[a as usize].victim_alive = false;
            }
        }
        Ok(())
    }

    /// Schedules `queue` in order and returns the normal instances placed.
    fn process(&mut self, queue: Vec<Pending>, slot: u64) -> Result<Vec<InstanceId>> {
        let mut placed_normal = Vec::new();
        for mut item in queue {
            let id = item.spec.instance_id;
            let attack = self.attack_of.get(&id).copied();
            if item.attempts == 0 {
                self.tally.submitted += 1;
            }
            if let Some(a) = attack {
                if !self.attacks[a as usize].victim_alive {
                    self.drop_item(item, slot, Some(a));
                    continue;
                }
            }

            let decision = self.scheduler.decide(&item.spec, &self.cluster, &mut self.rng_sched)?;
            item.attempts += 1;
            let required_rules = item.spec.required_rules().count();
            let Some(node) = decision.node() else {
                self.log(AuditRecord::Decision {
                    slot,
                    instance: id,
                    role: item.spec.role,
                    attack,
                    node: None,
                    candidates: 0,
                    score: None,
                    skipped_checks: decision.skipped_checks,
                    required_rules,
                    violated_required: None,
                    hit_victim: None,
                });
                if slot - item.first_slot < self.config.retry_limit {
                    self.retry.push(item);
                } else {
                    self.drop_item(item, slot, attack);
                }
                continue;
            };

            let violated = violated_required(&item.spec, self.cluster.node(node)?);
            let hit = match attack {
                Some(a) => {
                    let victim = self.attacks[a as usize].victim;
                    Some(self.cluster.locate(victim) == Some(node))
                }
                None => None,
            };
            self.cluster
                .allocate(node, id, item.spec.request, item.spec.own_labels.clone())?;

            let expires = match attack {
                Some(a) => {
                    let victim = self.attacks[a as usize].victim;
                    *self.expiry_of.get(&victim).ok_or_else(|| {
                        Error::Invariant(format!("live victim {victim} has no expiry"))
                    })?
                }
                None => slot + item.spec.lifetime_slots,
            };
            self.expiry.entry(expires).or_default().push(id);
            self.expiry_of.insert(id, expires);
            self.placement_order.insert(self.next_seq, id);
            self.seq_of.insert(id, self.next_seq);
            self.next_seq += 1;

            match attack {
                Some(a) => {
                    if hit == Some(true) {
                        self.attacks[a as usize].hit = true;
                    }
                }
                None => {
                    self.tally.add_placement(violated);
                    placed_normal.push(id);
                }
            }
            self.log(AuditRecord::Decision {
                slot,
                instance: id,
                role: item.spec.role,
                attack,
                node: Some(node),
                candidates: decision.candidate_count_after_filter,
                score: decision.score_of_chosen,
                skipped_checks: decision.skipped_checks,
                required_rules,
                violated_required: Some(violated),
                hit_victim: hit,
            });
            self.specs.insert(id, item.spec);
        }
        Ok(placed_normal)
    }

    fn drop_item(&mut self, item: Pending, slot: u64, attack: Option<u64>) {
        self.tally.dropped += 1;
        self.log(AuditRecord::Dropped {
            slot,
            instance: item.spec.instance_id,
            role: item.spec.role,
            attack,
        });
    }

    fn designate_victims(&mut self, slot: u64, placed_now: &[InstanceId]) -> Result<()> {
        let slots = self.config.slots as u128;
        let total = self.config.victim_count as u128;
        let quota = ((slot as u128 + 1) * total / slots - slot as u128 * total / slots) as usize
            + self.victim_deficit;
        let count = quota.min(placed_now.len());
        self.victim_deficit = quota - count;
        if count == 0 {
            return Ok(());
        }
        let victims = victim_sample(placed_now, count, &mut self.rng_attack)?;
        let due_slot = slot + self.config.attack.timing.offset();
        for victim in victims {
            let group = loop {
                let g: u32 = self.rng_attack.gen();
                if self.used_groups.insert(g) {
                    break g;
                }
            };
            let victim_spec = self
                .specs
                .get_mut(&victim)
                .ok_or_else(|| Error::Invariant(format!("victim {victim} has no spec")))?;
            victim_spec.role = Role::Victim;
            let victim_spec = victim_spec.clone();
            let expires = self.expiry_of[&victim];
            let specs = repttack_specs(
                &victim_spec,
                &self.config.attack,
                self.spreading_key,
                LabelValue(group),
                &mut self.ids,
                due_slot,
                expires.saturating_sub(due_slot),
                &mut self.rng_attack,
            );
            let index = self.attacks.len() as u64;
            self.attacks.push(AttackState {
                victim,
                instances: specs.iter().map(|s| s.instance_id).collect(),
                due_slot,
                counted: false,
                hit: false,
                victim_alive: true,
            });
            self.attack_of_victim.insert(victim, index);
            let pending = self.due_attacks.entry(due_slot).or_default();
            for spec in specs {
                self.attack_of.insert(spec.instance_id, index);
                pending.push(Pending { spec, first_slot: due_slot, attempts: 0 });
            }
        }
        Ok(())
    }

    /// Pops attacks due this slot. Attacks whose victim already left are
    /// voided and never submitted.
    fn submit_due_attacks(&mut self, slot: u64) -> Vec<Pending> {
        let Some(items) = self.due_attacks.remove(&slot) else {
            return Vec::new();
        };
        let mut announced = HashSet::new();
        let mut out = Vec::new();
        for item in items {
            let a = self.attack_of[&item.spec.instance_id];
            let state = &self.attacks[a as usize];
            let counted = state.victim_alive;
            if announced.insert(a) {
                let record = AuditRecord::Attack {
                    slot,
                    attack: a,
                    victim: state.victim,
                    instances: state.instances.clone(),
                    counted,
                };
                self.attacks[a as usize].counted = counted;
                self.log(record);
            }
            if counted {
                out.push(item);
            }
        }
        out
    }

    fn record_overlaps(&mut self, slot: u64) -> Result<()> {
        for a in 0..self.attacks.len() {
            let state = &self.attacks[a];
            if !state.victim_alive {
                continue;
            }
            let colocated = self.ledger.record_overlap(
                a as u64,
                state.victim,
                &state.instances,
                &self.cluster,
            )?;
            if self.audit.is_some() {
                self.log(AuditRecord::Overlap { slot, attack: a as u64, colocated });
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<Metrics> {
        let threshold = self.config.migration.as_ref().map(|m| m.success_threshold);
        let mut total = 0;
        let mut successful = 0;
        for (a, state) in self.attacks.iter().enumerate() {
            if !state.counted || state.due_slot >= self.config.slots {
                continue;
            }
            total += 1;
            let success = match threshold {
                None => state.hit,
                Some(t) => match self.ledger.entry(a as u64) {
                    Some(e) if e.slots_alive > 0 => lifetime_success(e, t)?,
                    _ => false,
                },
            };
            if success {
                successful += 1;
            }
        }
        self.tally.attacks_total = total;
        self.tally.attacks_successful = successful;
        Ok(self.tally.metrics())
    }
}
