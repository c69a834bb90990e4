use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dadmm_core::experiment::{cmd_compare_modes, cmd_eval, cmd_gen_data, cmd_train, cmd_transfer, ExperimentConfig};
use dadmm_core::{Error, ShareMode};

/// Unfolded D-ADMM experiments driven by a TOML config.
#[derive(Parser)]
#[command(name = "dadmm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Re-derive every seed in the config from this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the graph and the datasets.
    GenData,
    /// Train θ on the training split.
    Train {
        /// Overrides `unfolding.mode`.
        #[arg(long)]
        mode: Option<ShareMode>,
    },
    /// Compare trained θ with the fixed baseline on the test split.
    Eval {
        #[arg(long)]
        mode: Option<ShareMode>,
        /// θ file; defaults to the one `train` wrote for the mode.
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Run a shared θ on larger fresh graphs.
    Transfer {
        #[arg(long)]
        theta: Option<PathBuf>,
        /// Overrides `transfer.targets`, e.g. `12,20,40`.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
    },
    /// Evaluate the agent-specific and shared θ side by side.
    CompareModes,
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let path = cli.common.config.context("--config <path> is required")?;
    let mut config = ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.common.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = cli.common.out {
        config.out_dir = out;
    }
    match cli.command {
        Command::GenData => {
            for p in cmd_gen_data(&config)? {
                println!("{}", p.display());
            }
        }
        Command::Train { mode } => {
            if let Some(mode) = mode {
                config.unfolding.mode = mode;
            }
            print_json(&cmd_train(&config)?)?;
        }
        Command::Eval { mode, theta } => {
            if let Some(mode) = mode {
                config.unfolding.mode = mode;
            }
            print_json(&cmd_eval(&config, theta.as_deref())?)?;
        }
        Command::Transfer { theta, targets } => {
            if let Some(targets) = targets {
                config.transfer.targets = targets;
            }
            print_json(&cmd_transfer(&config, theta.as_deref())?)?;
        }
        Command::CompareModes => print_json(&cmd_compare_modes(&config)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Training divergence gets its own code so scripts can tell it apart.
            match e.downcast_ref::<Error>() {
                Some(Error::TrainingDiverged(_)) => ExitCode::from(3),
                Some(Error::MissingArtifact(_)) => ExitCode::from(4),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
