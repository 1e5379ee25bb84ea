//! `moje sweep`: the tokenizer x n-gram configuration sweep. For every
//! combination of {char, word} x {uni, tfidf-uni, bi, uni+bi} it reports
//! the full-corpus vocabulary size m plus test-split metrics of a model
//! trained with that featurization, as CSV.

use std::path::PathBuf;

use clap::Args;

use moje_core::featurize::{
    NGramConfig, NGramOrders, Tokenizer, TokenizerSpec, Vocabulary, Weighting,
};
use moje_core::metrics::f_beta;

use crate::config::{self, FeatureArgs, SelectScope, TrainPlan};
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Config file (TOML or JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (JSONL or CSV); repeatable.
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Hyperparameter grid file applied to every configuration.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub stratify: Option<bool>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub tokenizer: &'static str,
    pub h: &'static str,
    pub m: usize,
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f_beta: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
}

const H_CONFIGS: [(&str, NGramOrders, Weighting); 4] = [
    ("uni", NGramOrders::Uni, Weighting::Count),
    ("tfidf-uni", NGramOrders::Uni, Weighting::TfIdf),
    ("bi", NGramOrders::Bi, Weighting::Count),
    ("uni+bi", NGramOrders::UniBi, Weighting::Count),
];

/// Runs the sweep over a resolved base plan (its tokenizer/ngram fields are
/// ignored; the sweep supplies its own).
pub fn run_sweep(base: &TrainPlan) -> Result<Vec<SweepRow>, CliError> {
    let corpus = config::load_datasets(&base.data, "corpus")?;
    let (train, _val, test) = corpus
        .split_holdout(&base.split)
        .map_err(CliError::usage)?;

    let mut rows = Vec::new();
    for (tok_name, tok_spec) in [
        ("char", TokenizerSpec::char_default()),
        ("word", TokenizerSpec::word_default()),
    ] {
        for (h_name, orders, weighting) in H_CONFIGS {
            let ngram = NGramConfig { orders, weighting };
            let tokenizer = Tokenizer::from_spec(&tok_spec).map_err(CliError::usage)?;
            // m as reported per configuration: the vocabulary fitted over
            // the whole training split.
            let m = Vocabulary::fit(&tokenizer, ngram, &train)
                .map_err(CliError::runtime)?
                .len();

            let plan = TrainPlan {
                tokenizer_spec: tok_spec.clone(),
                ngram,
                ..base.clone()
            };
            let artifacts = super::train::train_on_splits(&plan, &train, &test)?;
            let r = &artifacts.report;
            rows.push(SweepRow {
                tokenizer: tok_name,
                h: h_name,
                m,
                auc: r.auc,
                accuracy: r.accuracy,
                f_beta: r.f_beta,
                f1: f1_from_report(r.precision, r.recall),
                recall: r.recall,
                precision: r.precision,
            });
        }
    }
    Ok(rows)
}

fn f1_from_report(precision: f64, recall: f64) -> f64 {
    f_beta(precision, recall, 1.0).unwrap_or(0.0)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("tokenizer,h,m,auc,acc,f_beta,f1,recall,precision\n");
    for r in rows {
        let auc = r.auc.map(|a| format!("{a:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{auc},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.tokenizer, r.h, r.m, r.accuracy, r.f_beta, r.f1, r.recall, r.precision
        ));
    }
    out
}

pub fn run(args: SweepArgs) -> CliResult {
    let features = FeatureArgs::default();
    let plan = config::resolve_plan(config::PlanInputs {
        config: args.config.as_deref(),
        data: &args.data,
        // The sweep never writes a bundle; any placeholder satisfies the
        // resolver's output requirement.
        out: Some(std::path::Path::new("sweep.unused")),
        features: &features,
        select_fraction: None,
        select_scope: Some(SelectScope::PerExpert),
        grid: args.grid.as_deref(),
        seed: args.seed,
        test_fraction: args.test_fraction,
        val_fraction: args.val_fraction,
        stratify: args.stratify,
        tau: args.tau,
    })?;
    let rows = run_sweep(&plan)?;
    print!("{}", rows_to_csv(&rows));
    Ok(())
}
