//! Command-line driver: run experiments from config files, validate
//! configs, list experiment kinds.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use cf_isac::experiment::{
    emit_results, run_experiment, ExperimentKind, FileConfig, OutputFormat,
};

#[derive(Parser)]
#[command(
    name = "cf-isac",
    version,
    about = "Monte Carlo simulator for dynamic-TDD cell-free MIMO sensing and communication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV/JSON results.
    Run {
        /// Configuration file (.toml or .json).
        #[arg(long)]
        config: PathBuf,
        /// Override the experiment kind from the config.
        #[arg(long)]
        experiment: Option<String>,
        /// Override the RNG seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the Monte Carlo trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (defaults to all cores).
        #[arg(long, env = "CF_ISAC_THREADS")]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
    /// Parse and validate a configuration file.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available experiment kinds.
    ListExperiments,
}

fn load_config(
    path: &PathBuf,
    experiment: Option<&str>,
    seed: Option<u64>,
    trials: Option<usize>,
) -> anyhow::Result<FileConfig> {
    let mut cfg = FileConfig::from_path(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(kind) = experiment {
        cfg.experiment.kind = ExperimentKind::parse(kind)?;
    }
    if let Some(seed) = seed {
        cfg.scenario.rng_seed = seed;
    }
    if let Some(trials) = trials {
        cfg.scenario.mc_trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            experiment,
            seed,
            out,
            trials,
            threads,
            format,
        } => {
            let cfg = load_config(&config, experiment.as_deref(), seed, trials)?;
            cf_isac::experiment::engine::configure_threads(threads);
            eprintln!(
                "running {} (M={}, N={}, K={}, trials={}, seed={})",
                cfg.experiment.kind.name(),
                cfg.scenario.num_aps,
                cfg.scenario.antennas_per_ap,
                cfg.scenario.num_users,
                cfg.scenario.mc_trials,
                cfg.scenario.rng_seed
            );
            let started = std::time::Instant::now();
            let result = run_experiment(&cfg)?;
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
                Format::Both => OutputFormat::Both,
            };
            let paths = emit_results(&result, &out, format)?;
            eprintln!(
                "{} records in {:.1}s (config hash {})",
                result.records.len(),
                started.elapsed().as_secs_f64(),
                &result.config_hash[..12]
            );
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(&config, None, None, None)?;
            println!(
                "ok: {} experiment, M={}, N={}, K={}, T={}, trials={}, hash {}",
                cfg.experiment.kind.name(),
                cfg.scenario.num_aps,
                cfg.scenario.antennas_per_ap,
                cfg.scenario.num_users,
                cfg.scenario.obs_window_slots,
                cfg.scenario.mc_trials,
                &cfg.hash()[..12]
            );
            Ok(())
        }
        Command::ListExperiments => {
            for kind in ExperimentKind::ALL {
                println!("{}", kind.name());
            }
            Ok(())
        }
    }
}
