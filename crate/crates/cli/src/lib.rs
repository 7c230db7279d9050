//! Command-line driver: dataset generation, training, evaluation and feature analysis.
//!
//! Each subcommand reads a [`config::RunConfig`] (JSON, optional), applies flag
//! overrides, validates everything before touching the filesystem, and writes its
//! outputs through temporary files so a failed run never leaves a half-written file
//! under the final name.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sparse_doa::snn_model::Variant;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sparse-doa", version, about = "Single-snapshot DOA estimation on sparse linear arrays")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a training dataset and its manifest.
    Generate(GenerateArgs),
    /// Train one model variant on a dataset.
    Train(TrainArgs),
    /// Score checkpoints (and optionally OMP) on a seeded sparse-array test set.
    Eval(EvalArgs),
    /// Embed fixed-DOA signal sets and report cluster tightness and PCA points.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Number of sampled combinations (full enumeration when unset).
    #[arg(long)]
    pub combinations: Option<usize>,
    #[arg(long)]
    pub signals_per_combination: Option<usize>,
    /// Print the manifest without writing anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; repeat for several models.
    #[arg(long = "checkpoint", value_name = "PATH")]
    pub checkpoints: Vec<PathBuf>,
    /// Evaluate on a dataset file instead of a fresh seeded test set.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub include_omp: bool,
    #[arg(long)]
    pub signals: Option<usize>,
    /// Elements zeroed per test signal.
    #[arg(long)]
    pub masked: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long = "checkpoint", value_name = "PATH")]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = cli.global.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be >= 1".into()));
        }
        cfg.threads = Some(t);
    }
    match &cli.command {
        Command::Generate(a) => {
            if let Some(p) = &a.out {
                cfg.dataset.path = p.clone();
            }
            if a.combinations.is_some() {
                cfg.dataset.spec.combinations = a.combinations;
            }
            if let Some(n) = a.signals_per_combination {
                cfg.dataset.spec.signals_per_combination = n;
            }
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            if let Some(v) = a.variant {
                t.variant = v;
            }
            if a.dataset.is_some() {
                t.dataset = a.dataset.clone();
            }
            if let Some(e) = a.epochs {
                t.epochs = e;
            }
            if let Some(b) = a.batch_size {
                t.batch_size = b;
            }
            if let Some(lr) = a.lr {
                t.lr = lr;
            }
            if a.checkpoint.is_some() {
                t.checkpoint = a.checkpoint.clone();
            }
            if a.loss_log.is_some() {
                t.loss_log = a.loss_log.clone();
            }
        }
        Command::Eval(a) => {
            let e = &mut cfg.eval;
            if !a.checkpoints.is_empty() {
                e.checkpoints = a.checkpoints.clone();
            }
            if a.dataset.is_some() {
                e.dataset = a.dataset.clone();
            }
            e.include_omp |= a.include_omp;
            if let Some(n) = a.signals {
                e.signals = n;
            }
            if let Some(m) = a.masked {
                e.masked_elements = m;
            }
            if let Some(p) = &a.csv {
                e.csv = p.clone();
            }
            if let Some(p) = &a.json {
                e.json = p.clone();
            }
        }
        Command::Features(a) => {
            let f = &mut cfg.features;
            if !a.checkpoints.is_empty() {
                f.checkpoints = a.checkpoints.clone();
            }
            if let Some(p) = &a.out_dir {
                f.out_dir = p.clone();
            }
            if let Some(c) = a.classes {
                f.classes = c;
            }
            if let Some(n) = a.per_class {
                f.per_class = n;
            }
        }
    }
    Ok(cfg)
}

/// Runs a parsed command, printing a short summary on stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli)?;
    cfg.require_seed()?;
    if let Some(t) = cfg.threads {
        if !sparse_doa::par::set_threads(t) && sparse_doa::par::is_parallel() {
            log::warn!("worker pool already initialized; --threads ignored");
        }
    }
    let force = cli.global.force;
    match cli.command {
        Command::Generate(a) => {
            let m = commands::generate::run(&cfg, commands::generate::GenerateOptions { force, dry_run: a.dry_run })?;
            println!("{}", serde_json::to_string_pretty(&m).map_err(CliError::runtime)?);
        }
        Command::Train(_) => {
            let s = commands::train::run(&cfg, force)?;
            if let Some(l) = s.logs.last() {
                println!(
                    "trained {} epochs: total {} bce {} contrastive {}; checkpoint {}",
                    l.epoch,
                    l.total,
                    l.bce,
                    l.contrastive,
                    s.checkpoint.display()
                );
            }
        }
        Command::Eval(_) => {
            let s = commands::eval::run(&cfg, force)?;
            for r in &s.reports {
                println!(
                    "{}: accuracy {} precision {} recall {} f1 {}",
                    r.model, r.overall.accuracy, r.overall.precision, r.overall.recall, r.overall.f1
                );
            }
        }
        Command::Features(_) => {
            let s = commands::features::run(&cfg, force)?;
            for r in &s.rows {
                println!("{} {}: tightness {} (pca2 {})", r.model, r.condition, r.tightness, r.tightness_pca2);
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
