//! `moje train`: load datasets, split, partition by category, fit one
//! expert per category, save the bundle, and report CV scores plus
//! test-split metrics.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use moje_core::corpus::Dataset;
use moje_core::learners::CvRecord;
use moje_core::metrics::MetricReport;
use moje_core::modelstore::{ModelBundle, Provenance};
use moje_core::moje::{ExpertTrainer, MojeModel};

use crate::config::{self, FeatureArgs, SelectScope, TrainPlan};
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file (TOML or JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (JSONL or CSV); repeatable.
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Output bundle path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Keep this fraction of features per expert, ranked by mutual
    /// information.
    #[arg(long)]
    pub select_fraction: Option<f64>,
    /// Where feature rankings are fitted.
    #[arg(long, value_enum)]
    pub select_scope: Option<SelectScope>,
    /// Hyperparameter grid file (TOML or JSON).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Seed for splits and fold assignment.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub stratify: Option<bool>,
    /// Decision threshold stored in the model.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Write per-setting CV scores to this CSV file.
    #[arg(long)]
    pub cv_report: Option<PathBuf>,
}

/// Per-expert training summary for reporting.
pub struct ExpertSummary {
    pub category: String,
    pub vocab_size: usize,
    pub kept_features: Option<usize>,
    pub family: String,
    pub params: String,
    pub cv_fbeta: f64,
    pub cv_records: Vec<CvRecord>,
}

pub struct TrainedArtifacts {
    pub model: MojeModel,
    pub summaries: Vec<ExpertSummary>,
    pub report: MetricReport,
    pub test_size: usize,
}

/// Runs the whole training pipeline for a resolved plan. Shared by the
/// `train` command and in-process callers.
pub fn train_from_plan(plan: &TrainPlan) -> Result<TrainedArtifacts, CliError> {
    let corpus = config::load_datasets(&plan.data, "corpus")?;
    let (train, _val, test) = corpus
        .split_holdout(&plan.split)
        .map_err(CliError::usage)?;
    train_on_splits(plan, &train, &test)
}

/// Trains on a prepared train split and evaluates on a prepared test split.
pub fn train_on_splits(
    plan: &TrainPlan,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrainedArtifacts, CliError> {
    let tokenizer = plan.tokenizer()?;
    let parts = train.partition_by_category().map_err(CliError::usage)?;
    if parts.is_empty() {
        return Err(CliError::Usage(
            "training data contains no jailbreak categories".into(),
        ));
    }

    let trainer = ExpertTrainer {
        tokenizer: &tokenizer,
        ngram: plan.ngram,
        select_fraction: plan.select_fraction,
        mi_corpus: match plan.select_scope {
            SelectScope::Global => Some(train),
            SelectScope::PerExpert => None,
        },
        grid: &plan.grid,
        seed: plan.split.seed,
    };

    let mut experts = Vec::new();
    let mut summaries = Vec::new();
    for (category, part) in &parts {
        let outcome = trainer
            .train(category, part)
            .map_err(|e| CliError::Runtime(format!("training expert {category:?}: {e}")))?;
        let expert = outcome.expert;
        summaries.push(ExpertSummary {
            category: category.clone(),
            vocab_size: expert.pipeline().vocab().len(),
            kept_features: expert.pipeline().mask().map(|m| m.len()),
            family: expert.classifier().family().to_string(),
            params: winning_params(&outcome.cv_records, expert.cv_fbeta()),
            cv_fbeta: expert.cv_fbeta(),
            cv_records: outcome.cv_records,
        });
        experts.push(expert);
    }

    let model = MojeModel::new(experts, plan.tau).map_err(CliError::runtime)?;

    let verdicts = model
        .infer_batch(test.iter().map(|e| e.text()))
        .map_err(CliError::runtime)?;
    let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
    let report = MetricReport::from_scores(&scores, &test.labels(), plan.grid.beta, plan.tau)
        .map_err(CliError::runtime)?;

    Ok(TrainedArtifacts {
        model,
        summaries,
        report,
        test_size: test.len(),
    })
}

fn winning_params(records: &[CvRecord], cv_fbeta: f64) -> String {
    records
        .iter()
        .find(|r| r.mean_fbeta == cv_fbeta)
        .map(|r| r.params.clone())
        .unwrap_or_default()
}

pub fn cv_report_csv(summaries: &[ExpertSummary]) -> String {
    let mut out = String::from("category,family,params,mean_fbeta,fold_fbetas\n");
    for s in summaries {
        for r in &s.cv_records {
            let folds = r
                .fold_fbetas
                .iter()
                .map(|f| format!("{f:.6}"))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},\"{}\",{:.6},{}",
                s.category, r.family, r.params, r.mean_fbeta, folds
            );
        }
    }
    out
}

pub fn run(args: TrainArgs) -> CliResult {
    let plan = config::resolve_plan(config::PlanInputs {
        config: args.config.as_deref(),
        data: &args.data,
        out: args.out.as_deref(),
        features: &args.features,
        select_fraction: args.select_fraction,
        select_scope: args.select_scope,
        grid: args.grid.as_deref(),
        seed: args.seed,
        test_fraction: args.test_fraction,
        val_fraction: args.val_fraction,
        stratify: args.stratify,
        tau: args.tau,
    })?;

    let artifacts = train_from_plan(&plan)?;

    for s in &artifacts.summaries {
        let kept = s
            .kept_features
            .map(|k| k.to_string())
            .unwrap_or_else(|| "-".into());
        println!(
            "expert {}: m={} kept={} family={} params=\"{}\" cv_fbeta={:.4}",
            s.category, s.vocab_size, kept, s.family, s.params, s.cv_fbeta
        );
    }

    let bundle = ModelBundle::new(
        artifacts.model,
        Provenance {
            config_digest: plan.config_digest(),
            seed: plan.split.seed,
            created_at: chrono::Utc::now().to_rfc3339(),
        },
    );
    bundle.save(&plan.out).map_err(CliError::runtime)?;

    if let Some(path) = &args.cv_report {
        std::fs::write(path, cv_report_csv(&artifacts.summaries))
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }

    println!("\ntest split: {} prompts", artifacts.test_size);
    print!("{}", artifacts.report.to_table());
    println!(
        "saved {} ({} experts)",
        plan.out.display(),
        bundle.model.experts().len()
    );
    Ok(())
}
