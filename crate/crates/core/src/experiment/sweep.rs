//! Parameter grids over the experiment config.
//!
//! A grid is written `path=values;path=values`, where `path` is a dotted
//! config field (`attack.k`, `workload.p_ma`, `migration.destination`) and
//! `values` is either an integer range `a..b` (inclusive) or a comma list.
//! Points are the cartesian product with the first parameter varying
//! slowest. Every point gets its own seed derived from the master seed and
//! the point's index.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::metrics::Metrics;
use super::run::run;

#[derive(Debug, Clone, PartialEq)]
pub struct GridParam {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grid {
    pub params: Vec<GridParam>,
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl Grid {
    pub fn parse(spec: &str) -> Result<Self> {
        let mut params = Vec::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (path, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid term `{part}` lacks `=`")))?;
            let path = path.trim().to_string();
            if path.is_empty() {
                return Err(Error::Config(format!("grid term `{part}` has an empty path")));
            }
            let values = values.trim();
            let parsed = if let Some((a, b)) = values.split_once("..") {
                let a: i64 = a.trim().parse().map_err(|_| Error::Config(format!("bad range start in `{part}`")))?;
                let b: i64 = b.trim().parse().map_err(|_| Error::Config(format!("bad range end in `{part}`")))?;
                if a > b {
                    return Err(Error::Config(format!("empty range in `{part}`")));
                }
                (a..=b).map(Value::from).collect()
            } else {
                values.split(',').map(parse_scalar).collect::<Vec<_>>()
            };
            if parsed.is_empty() {
                return Err(Error::Config(format!("grid term `{part}` has no values")));
            }
            params.push(GridParam { path, values: parsed });
        }
        Ok(Self { params })
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Grid points in order; an empty grid has exactly one (empty) point.
    pub fn points(&self) -> Vec<Vec<(String, Value)>> {
        let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for param in &self.params {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    param.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((param.path.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        points
    }
}

/// Sets `path` in a config, failing on unknown fields or ill-typed values.
pub fn apply_param(config: &ExperimentConfig, path: &str, value: &Value) -> Result<ExperimentConfig> {
    let mut doc = serde_json::to_value(config).expect("config serializes");
    let mut parts: Vec<&str> = path.split('.').collect();
    let leaf = parts.pop().expect("split yields one part");
    let mut cursor = &mut doc;
    for part in parts {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("unknown parameter `{path}`")))?;
        let next = obj
            .get_mut(part)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{path}`")))?;
        if next.is_null() {
            // optional section such as `migration`: materialize its defaults
            *next = default_section(part)
                .ok_or_else(|| Error::Config(format!("unknown parameter `{path}`")))?;
        }
        cursor = next;
    }
    let obj = cursor
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("unknown parameter `{path}`")))?;
    if !obj.contains_key(leaf) {
        return Err(Error::Config(format!("unknown parameter `{path}`")));
    }
    obj.insert(leaf.to_string(), value.clone());
    let updated: ExperimentConfig = serde_json::from_value(doc)
        .map_err(|e| Error::Config(format!("bad value {value} for `{path}`: {e}")))?;
    updated.validate()?;
    Ok(updated)
}

fn default_section(name: &str) -> Option<Value> {
    match name {
        "migration" => serde_json::to_value(crate::migration::MigrationConfig::default()).ok(),
        _ => None,
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub params: Vec<(String, Value)>,
    pub seed: u64,
    pub colocation_rate: Option<f64>,
    pub affinity_satisfaction: Option<f64>,
    pub mean_violated_specs: Option<f64>,
    pub rejection_rate: f64,
    pub attacks_total: u64,
    pub attacks_successful: u64,
    pub repetitions: usize,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Averages the repetitions of one grid point into a row.
pub fn aggregate(index: usize, params: Vec<(String, Value)>, seed: u64, runs: &[Metrics]) -> SweepRow {
    SweepRow {
        index,
        params,
        seed,
        colocation_rate: mean_of(runs.iter().map(|m| m.colocation_rate)),
        affinity_satisfaction: mean_of(runs.iter().map(|m| m.affinity_satisfaction)),
        mean_violated_specs: mean_of(runs.iter().map(|m| m.mean_violated_specs)),
        rejection_rate: runs.iter().map(|m| m.rejection_rate).sum::<f64>() / runs.len() as f64,
        attacks_total: runs.iter().map(|m| m.tally.attacks_total).sum(),
        attacks_successful: runs.iter().map(|m| m.tally.attacks_successful).sum(),
        repetitions: runs.len(),
    }
}

/// Runs one point: `repetitions` runs with seeds derived from the point seed.
pub fn run_point(config: &ExperimentConfig) -> Result<Vec<Metrics>> {
    (0..config.repetitions as u64)
        .map(|rep| {
            let mut c = config.clone();
            if config.repetitions > 1 {
                c.seed = derive_seed(config.seed, rep);
            }
            run(&c)
        })
        .collect()
}

/// One row per grid point, ordered by grid index. `jobs` bounds the worker
/// pool; the output does not depend on it.
pub fn sweep(base: &ExperimentConfig, grid: &Grid, jobs: usize) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let points = grid.points();
    let mut configs = Vec::with_capacity(points.len());
    for (i, point) in points.iter().enumerate() {
        let mut c = base.clone();
        for (path, value) in point {
            c = apply_param(&c, path, value)?;
        }
        c.sweep = None;
        if !grid.is_empty() {
            c.seed = derive_seed(base.seed, i as u64);
        }
        configs.push(c);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<Vec<Metrics>>> = pool.install(|| configs.par_iter().map(run_point).collect());

    let mut rows = Vec::with_capacity(points.len());
    for (i, (point, result)) in points.into_iter().zip(results).enumerate() {
        rows.push(aggregate(i, point, configs[i].seed, &result?));
    }
    Ok(rows)
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV with one row per grid point: grid parameters, then the metrics.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let param_names: Vec<String> = rows
        .first()
        .map(|r| r.params.iter().map(|(p, _)| p.clone()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = param_names.clone();
    header.extend(
        [
            "colocation_rate",
            "affinity_satisfaction",
            "mean_violated_specs",
            "rejection_rate",
            "attacks_total",
            "seed",
        ]
        .map(String::from),
    );
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for row in rows {
        let mut rec: Vec<String> = row.params.iter().map(|(_, v)| csv_value(v)).collect();
        rec.push(csv_opt(row.colocation_rate));
        rec.push(csv_opt(row.affinity_satisfaction));
        rec.push(csv_opt(row.mean_violated_specs));
        rec.push(format!("{:.6}", row.rejection_rate));
        rec.push(row.attacks_total.to_string());
        rec.push(row.seed.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
