//! `moje predict`: score prompts with a saved model, one JSON line per
//! prompt (label, score, rule, per-expert probabilities). Prompts come from
//! repeated --text flags or otherwise one per stdin line.

use std::io::BufRead;
use std::path::PathBuf;

use clap::Args;

use moje_core::modelstore::ModelBundle;

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model bundle.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Prompt to score; repeatable. Reads stdin lines when absent.
    #[arg(long = "text")]
    pub text: Vec<String>,
}

pub fn run(args: PredictArgs) -> CliResult {
    let bundle = ModelBundle::load(&args.bundle).map_err(CliError::usage)?;
    let model = bundle.model;

    let score = |prompt: &str| -> CliResult {
        let verdict = model.infer(prompt).map_err(CliError::runtime)?;
        let line =
            serde_json::to_string(&verdict).expect("verdict serialization cannot fail");
        println!("{line}");
        Ok(())
    };

    if args.text.is_empty() {
        let stdin = std::io::stdin();
        for line in stdin.lock().lines() {
            let line = line.map_err(CliError::runtime)?;
            score(&line)?;
        }
    } else {
        for prompt in &args.text {
            score(prompt)?;
        }
    }
    Ok(())
}
