//! `moje select`: fit a vocabulary over labeled data and export the
//! mutual-information feature ranking as CSV (index, term, score), highest
//! score first.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use moje_core::featurize::Vocabulary;
use moje_core::select::mutual_information;

use crate::config::{self, FeatureArgs};
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Labeled dataset file (JSONL or CSV); repeatable.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn ranking_csv(args: &SelectArgs) -> Result<String, CliError> {
    let data = config::load_datasets(&args.data, "select")?;
    let spec = config::resolve_tokenizer(&args.features, &Default::default())?;
    let ngram = config::resolve_ngram(&args.features, &Default::default())?;
    let tokenizer = moje_core::featurize::Tokenizer::from_spec(&spec).map_err(CliError::usage)?;
    let vocab = Vocabulary::fit(&tokenizer, ngram, &data).map_err(CliError::usage)?;

    let xs: Vec<_> = data
        .iter()
        .map(|e| vocab.transform(&tokenizer, e.text()))
        .collect::<moje_core::Result<_>>()
        .map_err(CliError::runtime)?;
    let ranking = mutual_information(&xs, &data.labels()).map_err(CliError::usage)?;

    let mut out = String::from("index,term,score\n");
    for &idx in ranking.order() {
        let term = &vocab.terms()[idx as usize];
        let _ = writeln!(
            out,
            "{idx},{},{:.9}",
            csv_quote(term),
            ranking.scores()[idx as usize]
        );
    }
    Ok(out)
}

fn csv_quote(term: &str) -> String {
    if term.contains([',', '"', '\n']) {
        format!("\"{}\"", term.replace('"', "\"\""))
    } else {
        term.to_owned()
    }
}

pub fn run(args: SelectArgs) -> CliResult {
    let csv = ranking_csv(&args)?;
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}
