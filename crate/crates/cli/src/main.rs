//! `fate`: ingest weather CSVs, train and evaluate the encoder, and emit
//! analysis reports.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Fault, SplitName};
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "fate", version, about = "Multi-station weather forecasting with a tensorized focal-modulation encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.batch_size=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random choice (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load CSVs, engineer features, window and cache the dataset.
    Ingest(Common),
    /// Train on the cached dataset; writes checkpoint and history.
    Train(Common),
    /// Per-target MAE and MSE in original units.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Correlation matrix, K-means clusters and modulation scores.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare backpropagated gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    RunConfig::load(&c.config, &c.sets, c.seed, c.out.as_deref())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(c) => commands::ingest(&load(&c)?),
        Command::Train(c) => commands::train(&load(&c)?),
        Command::Evaluate {
            common,
            checkpoint,
            split,
        } => commands::evaluate_cmd(&load(&common)?, checkpoint.as_deref(), split),
        Command::Analyze { common, checkpoint } => commands::analyze(&load(&common)?, checkpoint.as_deref()),
        Command::Gradcheck { common, inject_fault } => commands::gradcheck(&load(&common)?, inject_fault),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FATE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
