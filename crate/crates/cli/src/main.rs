mod commands;
mod context;
mod error;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Train, evaluate and interpret higher-order neural additive models.
#[derive(Debug, Parser)]
#[command(name = "honam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per seed and report mean/std test metrics.
    Train(commands::train::TrainArgs),
    /// Evaluate a saved model on a CSV file.
    Eval(commands::eval::EvalArgs),
    /// Export shape curves, pair heat maps or a local row breakdown.
    Interpret(commands::interpret::InterpretArgs),
    /// Remove features from a model and report fairness before and after.
    Ablate(commands::ablate::AblateArgs),
    /// Write a synthetic dataset with its schema.
    Synth(commands::synth::SynthArgs),
    /// Time the interaction kernels and count their multiplies.
    Bench(commands::bench::BenchArgs),
}

/// Output directory shared by every command.
#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Output directory (created if missing).
    #[arg(long, env = "HONAM_OUT_DIR", default_value = "honam-out")]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Interpret(a) => commands::interpret::run(a),
        Command::Ablate(a) => commands::ablate::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::Bench(a) => commands::bench::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
