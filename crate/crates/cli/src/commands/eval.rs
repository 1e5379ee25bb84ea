//! `moje eval`: aggregate metrics over labeled datasets, with optional
//! per-dataset TPr/FPr rows (each file must then be all-jailbreak or
//! all-benign).

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use moje_core::corpus::Dataset;
use moje_core::metrics::{per_dataset_rates, MetricReport};
use moje_core::modelstore::ModelBundle;

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model bundle to evaluate.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Labeled dataset files (JSONL or CSV).
    #[arg(required = true)]
    pub data: Vec<PathBuf>,
    /// Add one TPr/FPr row per input file; every file must be homogeneous.
    #[arg(long)]
    pub per_dataset: bool,
    /// Emit CSV instead of the table.
    #[arg(long)]
    pub csv: bool,
}

pub fn run(args: EvalArgs) -> CliResult {
    let bundle = ModelBundle::load(&args.bundle).map_err(CliError::usage)?;
    let model = bundle.model;

    let mut named: BTreeMap<String, Dataset> = BTreeMap::new();
    let mut parts = Vec::new();
    for path in &args.data {
        let ds = Dataset::load_path(path).map_err(CliError::usage)?;
        named.insert(ds.name().to_owned(), ds.clone());
        parts.push(ds);
    }
    let all = Dataset::concat("eval", &parts);
    if all.is_empty() {
        return Err(CliError::Usage("evaluation datasets are empty".into()));
    }

    let verdicts = model
        .infer_batch(all.iter().map(|e| e.text()))
        .map_err(CliError::runtime)?;
    let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
    let mut report = MetricReport::from_scores(&scores, &all.labels(), 0.5, model.tau())
        .map_err(CliError::runtime)?;

    if args.per_dataset {
        report.per_dataset = per_dataset_rates(&model, &named).map_err(CliError::usage)?;
    }

    if args.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}
