use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    /// Initial placements of normal (and victim) instances.
    pub placed: u64,
    /// Of those, placements whose node satisfied every required rule.
    pub satisfied: u64,
    pub violated_total: u64,
    pub submitted: u64,
    pub dropped: u64,
    pub attacks_total: u64,
    pub attacks_successful: u64,
}

impl Tally {
    pub fn add_placement(&mut self, violated_required: usize) {
        self.placed += 1;
        self.violated_total += violated_required as u64;
        if violated_required == 0 {
            self.satisfied += 1;
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            colocation_rate: colocation_rate(self.attacks_successful, self.attacks_total).ok(),
            affinity_satisfaction: affinity_satisfaction(self.satisfied, self.placed).ok(),
            mean_violated_specs: mean_violated_specs(self.violated_total, self.placed).ok(),
            rejection_rate: if self.submitted == 0 {
                0.0
            } else {
                self.dropped as f64 / self.submitted as f64
            },
            tally: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when no attack was counted.
    pub colocation_rate: Option<f64>,
    pub affinity_satisfaction: Option<f64>,
    pub mean_violated_specs: Option<f64>,
    /// Fraction of submitted instances dropped after exhausting retries.
    pub rejection_rate: f64,
    #[serde(flatten)]
    pub tally: Tally,
}

/// Successful attacks over total attacks.
pub fn colocation_rate(successful: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::NotApplicable("no attacks were counted".into()));
    }
    Ok(successful as f64 / total as f64)
}

/// Fraction of placements whose node met all required rules.
pub fn affinity_satisfaction(satisfied: u64, placed: u64) -> Result<f64> {
    if placed == 0 {
        return Err(Error::NotApplicable("no instance was placed".into()));
    }
    Ok(satisfied as f64 / placed as f64)
}

pub fn mean_violated_specs(violated_total: u64, placed: u64) -> Result<f64> {
    if placed == 0 {
        return Err(Error::NotApplicable("no instance was placed".into()));
    }
    Ok(violated_total as f64 / placed as f64)
}
