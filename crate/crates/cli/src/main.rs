//! `lipread`: preprocess a corpus, train and evaluate word classifiers.

mod commands;
mod config;
mod ingest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lipread_core::Error;

use config::RawConfig;

#[derive(Parser)]
#[command(name = "lipread", version, about = "Visual speech recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings come from `--config <file>` (`key = value` lines) and
/// `--key value` overrides.
#[derive(clap::Args)]
struct Settings {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    settings: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract mouth patches and write the word manifest
    Preprocess(Settings),
    /// Train svm-eigen, svm-hog or lstm on one speaker
    Train(Settings),
    /// Score a checkpoint on the test split and write reports
    Eval(Settings),
    /// Check backpropagation against finite differences
    Gradcheck(Settings),
    /// Write a synthetic dataset
    Synth(Settings),
    /// Merge per-speaker reports or compare two systems
    Report(Settings),
}

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TrainingDiverged { .. } | Error::DegenerateData(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (Command::Preprocess(s)
    | Command::Train(s)
    | Command::Eval(s)
    | Command::Gradcheck(s)
    | Command::Synth(s)
    | Command::Report(s)) = &cli.command;
    let cfg = match RawConfig::from_args(&s.settings).and_then(|raw| raw.resolve()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match &cli.command {
        Command::Preprocess(_) => {
            ingest::run(&cfg).map(|n| println!("wrote {n} word samples to {}", cfg.data.display()))
        }
        Command::Train(_) => commands::train(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::Gradcheck(_) => match commands::gradcheck(&cfg) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_NUMERIC),
            Err(e) => Err(e),
        },
        Command::Synth(_) => commands::synth(&cfg),
        Command::Report(_) => commands::report(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
