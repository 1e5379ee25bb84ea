//! Command-line lifecycle for the guardrail: ingest datasets, train the
//! expert mixture, evaluate it, sweep featurizations, export feature
//! rankings, extend a model with new experts, score prompts, and serve the
//! moderation endpoint.

pub mod commands;
pub mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "moje",
    version,
    about = "Jailbreak-prompt guardrail: a mixture of per-category n-gram experts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model: split, partition by category, fit one expert each.
    Train(commands::train::TrainArgs),
    /// Evaluate a saved model on labeled datasets.
    Eval(commands::eval::EvalArgs),
    /// Run the tokenizer x n-gram configuration sweep and emit CSV rows.
    Sweep(commands::sweep::SweepArgs),
    /// Export a mutual-information feature ranking as CSV.
    Select(commands::select::SelectArgs),
    /// Train one new expert and write an extended copy of a model.
    AddExpert(commands::add_expert::AddExpertArgs),
    /// Score prompts from flags or stdin, one JSON line per prompt.
    Predict(commands::predict::PredictArgs),
    /// Serve the moderation HTTP API.
    Serve(commands::serve::ServeArgs),
}

pub fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Select(args) => commands::select::run(args),
        Command::AddExpert(args) => commands::add_expert::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Serve(args) => commands::serve::run(args),
    }
}

pub fn main_impl() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
