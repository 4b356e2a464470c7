//! Line-delimited audit records and metric recomputation from them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, NodeId};
use crate::error::{Error, Result};
use crate::migration::{lifetime_success, OverlapEntry};
use crate::workload::Role;

use super::metrics::{Metrics, Tally};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum AuditRecord {
    Decision {
        slot: u64,
        instance: InstanceId,
        role: Role,
        attack: Option<u64>,
        node: Option<NodeId>,
        candidates: usize,
        score: Option<f64>,
        skipped_checks: u32,
        required_rules: usize,
        /// Required rules broken on the chosen node, evaluated on the state
        /// the filter saw.
        violated_required: Option<usize>,
        /// For attack instances: whether the chosen node hosts the victim.
        hit_victim: Option<bool>,
    },
    Dropped {
        slot: u64,
        instance: InstanceId,
        role: Role,
        attack: Option<u64>,
    },
    Attack {
        slot: u64,
        attack: u64,
        victim: InstanceId,
        instances: Vec<InstanceId>,
        /// False when the victim was gone before the attack was submitted.
        counted: bool,
    },
    Migration {
        slot: u64,
        instance: InstanceId,
        from: NodeId,
        to: NodeId,
    },
    Overlap {
        slot: u64,
        attack: u64,
        colocated: bool,
    },
}

pub fn write_jsonl<W: Write>(records: &[AuditRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<AuditRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| Error::Io(format!("audit line {}: {e}", i + 1)))?;
        records.push(r);
    }
    Ok(records)
}

/// Recomputes the run metrics from its audit trail alone. `lifetime_threshold`
/// selects the migration success criterion when set; otherwise an attack
/// succeeds when any of its instances was placed on the victim's node.
pub fn metrics_from_audit(records: &[AuditRecord], lifetime_threshold: Option<f64>) -> Result<Metrics> {
    let mut tally = Tally::default();
    let mut submitted: BTreeSet<InstanceId> = BTreeSet::new();
    let mut counted: BTreeSet<u64> = BTreeSet::new();
    let mut hits: BTreeSet<u64> = BTreeSet::new();
    let mut overlap: BTreeMap<u64, OverlapEntry> = BTreeMap::new();

    for r in records {
        match r {
            AuditRecord::Decision { instance, role, attack, node, violated_required, hit_victim, .. } => {
                submitted.insert(*instance);
                if let (Some(_), Role::Normal | Role::Victim) = (node, role) {
                    let v = violated_required.ok_or_else(|| {
                        Error::Invariant(format!("placement of {instance} lacks a violation count"))
                    })?;
                    tally.add_placement(v);
                }
                if let (Some(a), Some(true)) = (attack, hit_victim) {
                    hits.insert(*a);
                }
            }
            AuditRecord::Dropped { instance, .. } => {
                submitted.insert(*instance);
                tally.dropped += 1;
            }
            AuditRecord::Attack { attack, counted: true, .. } => {
                counted.insert(*attack);
            }
            AuditRecord::Overlap { attack, colocated, .. } => {
                let e = overlap.entry(*attack).or_default();
                e.slots_alive += 1;
                if *colocated {
                    e.slots_colocated += 1;
                }
            }
            AuditRecord::Attack { .. } | AuditRecord::Migration { .. } => {}
        }
    }
    tally.submitted = submitted.len() as u64;
    tally.attacks_total = counted.len() as u64;
    tally.attacks_successful = match lifetime_threshold {
        None => counted.iter().filter(|a| hits.contains(a)).count() as u64,
        Some(t) => {
            let mut n = 0;
            for a in &counted {
                if let Some(e) = overlap.get(a) {
                    if e.slots_alive > 0 && lifetime_success(e, t)? {
                        n += 1;
                    }
                }
            }
            n
        }
    };
    Ok(tally.metrics())
}
