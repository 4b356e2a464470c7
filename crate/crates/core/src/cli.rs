//! Command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::attack::{repttack_specs, AttackConfig};
use crate::cluster::{LabelUniverse, LabelValue};
use crate::error::{Error, Result};
use crate::experiment::{aggregate, audit, run_with_audit, sweep, write_csv, ExperimentConfig, Grid};
use crate::manifest::{parse_pod_manifest, to_pod_manifest, ManifestConfig};
use crate::workload::IdGen;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "colosim", version, about = "Co-location attack and mitigation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write summary.json, results.csv and audit.jsonl.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long, env = "COLOSIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter grid and write results.csv and summary.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid such as `attack.k=1..10;attack.spreading=true,false`.
        /// Defaults to the config's `sweep` field.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "COLOSIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build attack manifests from a victim pod manifest.
    AttackGen {
        #[arg(long)]
        victim: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        spread: bool,
        /// Seeds the attack's spreading-label value.
        #[arg(long, env = "COLOSIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Manifest(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_INVARIANT,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_json(&read(path)?)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = load_config(config, seed)?;
    let output = run_with_audit(&config, true)?;
    make_dir(out)?;

    let row = aggregate(0, Vec::new(), config.seed, &[output.metrics]);
    write_csv(&[row], create(&out.join("results.csv"))?)?;
    audit::write_jsonl(output.audit.as_deref().unwrap_or_default(), create(&out.join("audit.jsonl"))?)?;
    write_json(
        &out.join("summary.json"),
        &json!({ "seed": config.seed, "metrics": output.metrics, "config": config }),
    )
}

pub fn cmd_sweep(config: &Path, grid: Option<&str>, jobs: usize, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = load_config(config, seed)?;
    let spec = grid.or(config.sweep.as_deref()).unwrap_or("");
    let grid = Grid::parse(spec)?;
    let rows = sweep(&config, &grid, jobs)?;
    make_dir(out)?;
    write_csv(&rows, create(&out.join("results.csv"))?)?;
    write_json(
        &out.join("summary.json"),
        &json!({ "seed": config.seed, "grid": spec, "rows": rows }),
    )
}

/// Returns the paths of the written manifests.
pub fn cmd_attack_gen(victim: &Path, k: usize, spread: bool, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let attack = AttackConfig {
        k,
        spreading: spread,
        ..AttackConfig::default()
    };
    attack.validate()?;
    let manifest_config = ManifestConfig::default();
    let mut universe = LabelUniverse::generate(0, 0, 0);
    let spec = parse_pod_manifest(&read(victim)?, &mut universe, &manifest_config)?;
    let spreading_key = universe.spreading_key().expect("generated universe has a spreading key");

    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let group = LabelValue(rng.gen());
    let mut ids = IdGen::new(spec.instance_id.0 + 1);
    let attacks = repttack_specs(
        &spec,
        &attack,
        spreading_key,
        group,
        &mut ids,
        spec.submit_slot,
        spec.lifetime_slots,
        &mut rng,
    );

    let dir = out.join("manifests");
    make_dir(&dir)?;
    let mut written = Vec::with_capacity(attacks.len());
    for (i, a) in attacks.iter().enumerate() {
        let path = dir.join(format!("attack-{i}.yaml"));
        fs::write(&path, to_pod_manifest(a, &universe, &manifest_config)?)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out),
        Command::Sweep {
            config,
            grid,
            jobs,
            seed,
            out,
        } => cmd_sweep(&config, grid.as_deref(), jobs, seed, &out),
        Command::AttackGen {
            victim,
            k,
            spread,
            seed,
            out,
        } => cmd_attack_gen(&victim, k, spread, seed, &out).map(|_| ()),
    }
}
