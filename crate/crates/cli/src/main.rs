//! `star`: synthetic data, training, evaluation and ablation sweeps.

mod ablate;
mod config;
mod error;
mod eval;
mod info;
mod synth;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use star_core::training::TrainMode;

use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "star", version, about = "Change detection trained from single-temporal tiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic single-temporal training set and bitemporal eval set.
    Synth(synth::SynthArgs),
    /// Train a model from a run config.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint on a bitemporal dataset.
    Eval(eval::EvalArgs),
    /// Train and evaluate every point of a hyperparameter / loss-flag grid.
    Ablate(ablate::AblateArgs),
    /// Print the architecture and parameter counts of a config.
    ModelInfo(info::InfoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Star,
    Bitemporal,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Star => TrainMode::Star,
            ModeArg::Bitemporal => TrainMode::Bitemporal,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Ablate(args) => ablate::run(args),
        Command::ModelInfo(args) => info::run(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
