//! `instrclass`: build datasets, train, evaluate and sweep instrument
//! classifiers from one TOML run configuration.
//!
//! Every command accepts `--config` (or `INSTRCLASS_CONFIG`) and repeated
//! `--set key.path=value` overrides (or `INSTRCLASS_SET`, `;`-separated).
//! Outputs go under `<paths.output_dir>/data-<hash>/` (datasets) and
//! `<paths.output_dir>/run-<hash>/` (models and reports), each hash taken
//! over the resolved configuration, which is copied alongside.

mod commands;
mod config;
mod data;
mod failure;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use failure::{Failure, Outcome, Stage};

#[derive(Parser)]
#[command(name = "instrclass", version, about = "Musical instrument classification pipeline")]
struct Cli {
    /// Worker threads for feature extraction and model training; defaults
    /// to every core. Results do not depend on this value.
    #[arg(long, global = true, env = "INSTRCLASS_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, env = "INSTRCLASS_CONFIG")]
    config: PathBuf,
    /// Override a config field, e.g. `--set dataset.per_class=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", env = "INSTRCLASS_SET", value_delimiter = ';')]
    overrides: Vec<String>,
    #[arg(long, env = "INSTRCLASS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, env = "INSTRCLASS_PER_CLASS")]
    per_class: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract NuFDIC features and/or render SIDIC images.
    Build(ConfigArgs),
    /// Train the configured model and save it with its history.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, env = "INSTRCLASS_SEED")]
        seed: u64,
    },
    /// Confusion matrices and per-class metrics of a trained model.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seed of the training run to locate its model.
        #[arg(long, env = "INSTRCLASS_SEED")]
        seed: Option<u64>,
        /// Model file; overrides the run-directory lookup.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Accuracy across per-class sizes with power-curve fits.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, env = "INSTRCLASS_SEED")]
        seed: u64,
    },
    /// Run the built-in oracle suites.
    Selftest,
}

fn load_config(args: &ConfigArgs, seed: Option<u64>) -> Outcome<RunConfig> {
    const STAGE: &str = "config";
    let path = &args.config;
    let text = std::fs::read_to_string(path).at(STAGE, path)?;
    let mut overrides = args.overrides.clone();
    if let Some(dir) = &args.output_dir {
        let v = toml::Value::String(dir.display().to_string());
        overrides.push(format!("paths.output_dir={v}"));
    }
    if let Some(n) = args.per_class {
        overrides.push(format!("dataset.per_class={n}"));
    }
    let mut cfg = RunConfig::parse(&text, &overrides).at(STAGE, path)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::path::absolute(base).context("resolving config directory").at(STAGE, path)?;
    cfg.resolve_paths(&base);
    cfg.training.seed = seed.or(cfg.training.seed);
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::new("config", None, anyhow!("--jobs must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().stage("config")?;
    }
    match cli.command {
        Command::Build(args) => {
            let dir = data::build(&load_config(&args, None)?, cli.jobs)?;
            println!("data {}", dir.display());
        }
        Command::Train { cfg, seed } => {
            let dir = commands::train(&load_config(&cfg, Some(seed))?)?;
            println!("run {}", dir.display());
        }
        Command::Eval { cfg, seed, model } => {
            let dir = commands::eval(&load_config(&cfg, seed)?, model.as_deref())?;
            println!("eval {}", dir.display());
        }
        Command::Sweep { cfg, seed } => {
            let dir = commands::sweep(&load_config(&cfg, Some(seed))?)?;
            println!("sweep {}", dir.display());
        }
        Command::Selftest => {
            let results = selftest::run_all();
            let mut failed = 0;
            for r in &results {
                match &r.outcome {
                    Ok(detail) => println!("selftest {} PASS {detail}", r.name),
                    Err(e) => {
                        failed += 1;
                        println!("selftest {} FAIL {e:#}", r.name);
                    }
                }
            }
            if failed > 0 {
                return Err(Failure::new("selftest", None, anyhow!("{failed} of {} suites failed", results.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::FAILURE
        }
    }
}
