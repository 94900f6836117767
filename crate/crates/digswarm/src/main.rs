//! Command-line front end: single runs, give-up-rate sweeps, protocol
//! comparisons, and re-analysis of saved event logs.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use digswarm::metrics::{self, DEFAULT_OCCUPANCY_BINS};
use digswarm::sweep::{self, SweepSpec};
use digswarm::{engine, EventLog, SimConfig};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "digswarm", version, about = "Collective excavation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its log and analyses.
    Run {
        /// Configuration file (JSON); omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep give-up probability against tunnel length and write the rates.
    Sweep {
        /// Sweep specification (JSON); omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run all three protocols on shared seeds and write the comparison.
    Compare {
        /// Base configuration file (JSON); the protocol field is overridden.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds: a comma list like `0,1,2` or a range like `0..20`
        /// (end-exclusive).
        #[arg(long, default_value = "0..20")]
        seeds: String,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute analyses from a saved event log.
    Report {
        /// Event log (NDJSON) from a previous run.
        #[arg(long)]
        events: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => run(config.as_deref(), seed, &out),
        Command::Sweep { spec, out } => run_sweep(spec.as_deref(), &out),
        Command::Compare { config, seeds, out } => compare(config.as_deref(), &seeds, &out),
        Command::Report { events, out } => report(&events, &out),
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            SimConfig::from_json(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// Accepts `7`, `0,1,2`, or an end-exclusive range `0..20`.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().context("range start")?;
        let hi: u64 = hi.trim().parse().context("range end")?;
        if lo >= hi {
            bail!("empty seed range {text:?}");
        }
        return Ok((lo..hi).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("seed {s:?}")))
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes the standard per-run analysis files next to the log.
fn write_analyses(log: &EventLog, out: &Path) -> Result<()> {
    let report = metrics::compute(log).context("computing metrics")?;
    write(&out.join("metrics.json"), &report.to_json_pretty())?;
    let deposits = File::create(out.join("deposits.csv")).context("creating deposits.csv")?;
    metrics::write_deposits_csv(log, deposits)?;
    let grid = metrics::occupancy(log, DEFAULT_OCCUPANCY_BINS)?;
    let occupancy = File::create(out.join("occupancy.csv")).context("creating occupancy.csv")?;
    metrics::write_occupancy_csv(&grid, occupancy)?;
    println!(
        "{} deposits over {} ticks (final length {}); wrote {}",
        report.deposits,
        report.horizon,
        report.l_final,
        out.display()
    );
    Ok(())
}

fn run(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let result = engine::run(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("config.json"), &cfg.to_json_pretty())?;
    let events = File::create(out.join("events.ndjson")).context("creating events.ndjson")?;
    result.log.write_ndjson(events)?;
    write_analyses(&result.log, out)
}

fn run_sweep(spec: Option<&Path>, out: &Path) -> Result<()> {
    let spec = match spec {
        None => SweepSpec::default(),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            SweepSpec::from_json(&text).with_context(|| format!("parsing spec {}", p.display()))?
        }
    };
    let matrix = sweep::sweep_reversal(&spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rates = File::create(out.join("ratematrix.csv")).context("creating ratematrix.csv")?;
    matrix.write_csv(rates)?;
    let optimal = matrix.optimal_reversal_per_length();
    let summary = serde_json::json!({
        "spec": spec,
        "optimal_reversal_per_length": optimal,
    });
    write(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    println!(
        "swept {} cells x {} seeds; wrote {}",
        spec.reversal_grid.len() * spec.length_grid.len(),
        spec.seeds,
        out.display()
    );
    for (length, reversal) in optimal {
        println!("  length {length}: best give-up probability {reversal}");
    }
    Ok(())
}

fn compare(config: Option<&Path>, seeds: &str, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let seeds = parse_seeds(seeds)?;
    let comparison = sweep::compare_protocols(&cfg, &seeds)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv = File::create(out.join("summary.csv")).context("creating summary.csv")?;
    comparison.write_csv(csv)?;
    write(&out.join("summary.json"), &comparison.to_json_pretty())?;
    println!("compared 3 protocols on {} seeds; wrote {}", seeds.len(), out.display());
    for p in &comparison.protocols {
        println!(
            "  {:?}: mean deposits {:.1} (sd {:.1}), mean gini {}",
            p.protocol,
            p.mean_deposits,
            p.sd_deposits,
            p.mean_gini
                .map(|g| format!("{g:.3}"))
                .unwrap_or_else(|| "n/a".into()),
        );
    }
    Ok(())
}

fn report(events: &Path, out: &Path) -> Result<()> {
    let file =
        File::open(events).with_context(|| format!("opening log {}", events.display()))?;
    let log = EventLog::read_ndjson(BufReader::new(file))
        .with_context(|| format!("parsing log {}", events.display()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_analyses(&log, out)
}
