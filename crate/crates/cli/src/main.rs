//! Command-line surface. Every pipeline subcommand takes a TOML experiment
//! config (see `configs/` for worked examples); `verify` also answers
//! single JSON queries. The `ROBNET_THREADS` environment variable caps the
//! evaluation worker pool (unset or 0 = one worker per core; 1 reproduces
//! CSV artifacts byte for byte).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use robnet_cli::config::{config_hash, load_config, ExperimentConfig};
use robnet_cli::harness;
use robnet_cli::query;

#[derive(Parser)]
#[command(
    name = "robnet",
    version,
    about = "Train, attack, and formally verify robustness properties of small dense classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the verifier's wall-clock budget, in seconds.
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Write artifacts here instead of the config's `out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured regime for every seed; writes models, epoch
    /// logs, and manifest.json.
    Train(ConfigArgs),
    /// Attack every test point of every trained net; writes one per-point
    /// CSV per (seed, property) under attack/.
    Attack(ConfigArgs),
    /// Run the satisfaction/security/accuracy sweep over epsilon on the
    /// trained nets; writes sweep.csv.
    Evaluate(ConfigArgs),
    /// Verify: with a .json argument, answer that single query on stdout;
    /// with a .toml config, build the per-net satisfaction table.csv.
    Verify(ConfigArgs),
    /// Train, evaluate, and build the satisfaction table in one run.
    Sweep(ConfigArgs),
    /// Merge sweep CSVs (e.g. one per regime) into a seed-aggregated
    /// summary table.
    Report(ReportArgs),
}

#[derive(Args)]
struct ReportArgs {
    /// One or more sweep.csv files.
    #[arg(required = true)]
    sweeps: Vec<PathBuf>,
    /// Output path for the summary CSV.
    #[arg(long, default_value = "summary.csv")]
    out: PathBuf,
}

/// Loaded config plus the two directories derived from the invocation: the
/// config's own directory (anchors relative dataset paths) and the output
/// root (the `--out-dir` flag wins over the config's `out_dir`).
struct Loaded {
    cfg: ExperimentConfig,
    base: PathBuf,
    out_dir: PathBuf,
}

fn load(args: &ConfigArgs) -> Result<Loaded> {
    let mut cfg = load_config(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(secs) = args.budget_seconds {
        if !(secs > 0.0 && secs.is_finite()) {
            bail!("--budget-seconds must be finite and > 0");
        }
        let mut budget = cfg.budget.clone().unwrap_or_default();
        budget.max_seconds = Some(secs);
        cfg.budget = Some(budget);
    }
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = match &args.out_dir {
        Some(dir) => dir.clone(),
        None => base.join(&cfg.out_dir),
    };
    println!("config {} ({})", config_hash(&cfg), cfg.name);
    Ok(Loaded { cfg, base, out_dir })
}

fn worker_threads() -> Result<usize> {
    match std::env::var("ROBNET_THREADS") {
        Ok(value) => value
            .parse::<usize>()
            .map_err(|_| anyhow::anyhow!("ROBNET_THREADS must be a non-negative integer, got \"{value}\"")),
        Err(_) => Ok(0),
    }
}

fn do_train(run: &Loaded) -> Result<()> {
    let manifest = harness::run_train(&run.cfg, &run.base, &run.out_dir)?;
    for s in &manifest.seeds {
        println!(
            "trained {} seed {}: train accuracy {:.3}, test accuracy {:.3}",
            manifest.regime, s.seed, s.train_accuracy, s.test_accuracy
        );
    }
    println!("wrote {}", run.out_dir.join("manifest.json").display());
    Ok(())
}

fn do_evaluate(run: &Loaded) -> Result<()> {
    let path = harness::run_evaluate(&run.cfg, &run.base, &run.out_dir, worker_threads()?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn do_table(run: &Loaded) -> Result<()> {
    let path = harness::run_verify_table(&run.cfg, &run.base, &run.out_dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn do_verify(args: &ConfigArgs) -> Result<()> {
    let is_query = args.config.extension().is_some_and(|e| e == "json");
    if is_query {
        if args.seed.is_some() || args.out_dir.is_some() {
            bail!("--seed and --out-dir do not apply to single-query verification");
        }
        let verdict = query::run_query(&args.config, args.budget_seconds)
            .with_context(|| format!("verifying {}", args.config.display()))?;
        println!("{}", verdict.to_json());
        return Ok(());
    }
    do_table(&load(args)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => do_train(&load(&args)?),
        Command::Attack(args) => {
            let run = load(&args)?;
            let files = harness::run_attack(&run.cfg, &run.base, &run.out_dir)?;
            println!("wrote {} attack reports under {}", files.len(), run.out_dir.join("attack").display());
            Ok(())
        }
        Command::Evaluate(args) => do_evaluate(&load(&args)?),
        Command::Verify(args) => do_verify(&args),
        Command::Sweep(args) => {
            let run = load(&args)?;
            do_train(&run)?;
            do_evaluate(&run)?;
            do_table(&run)
        }
        Command::Report(args) => {
            harness::run_report(&args.sweeps, &args.out)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
    }
}
