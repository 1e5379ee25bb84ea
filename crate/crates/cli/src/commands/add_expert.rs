//! `moje add-expert`: train one new expert (benign + one new category) and
//! write an extended copy of an existing bundle. The input bundle is never
//! modified.

use std::path::PathBuf;

use clap::Args;

use moje_core::modelstore::{ModelBundle, Provenance};
use moje_core::moje::ExpertTrainer;

use crate::config::{self, FeatureArgs};
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct AddExpertArgs {
    /// Existing bundle to extend.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Category id of the new expert.
    #[arg(long)]
    pub category: String,
    /// Training data: benign examples plus jailbreaks of the new category.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Where to write the extended bundle (must differ from --bundle).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub select_fraction: Option<f64>,
    /// Hyperparameter grid file (TOML or JSON).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: AddExpertArgs) -> CliResult {
    if same_file(&args.bundle, &args.out) {
        return Err(CliError::Usage(
            "--out must differ from --bundle; the original bundle is left untouched".into(),
        ));
    }
    let bundle = ModelBundle::load(&args.bundle).map_err(CliError::usage)?;
    if bundle
        .model
        .experts()
        .iter()
        .any(|e| e.category() == args.category)
    {
        return Err(CliError::Usage(format!(
            "category {:?} already present in {}",
            args.category,
            args.bundle.display()
        )));
    }

    let data = config::load_datasets(&args.data, &args.category)?;
    let spec = config::resolve_tokenizer(&args.features, &Default::default())?;
    let ngram = config::resolve_ngram(&args.features, &Default::default())?;
    let tokenizer = moje_core::featurize::Tokenizer::from_spec(&spec).map_err(CliError::usage)?;
    let grid = match &args.grid {
        Some(path) => config::load_grid(path)?,
        None => Default::default(),
    };
    let seed = args.seed.unwrap_or(0);

    let trainer = ExpertTrainer {
        tokenizer: &tokenizer,
        ngram,
        select_fraction: args.select_fraction,
        mi_corpus: None,
        grid: &grid,
        seed,
    };
    let outcome = trainer
        .train(&args.category, &data)
        .map_err(|e| CliError::Runtime(format!("training expert {:?}: {e}", args.category)))?;
    println!(
        "expert {}: m={} family={} cv_fbeta={:.4}",
        args.category,
        outcome.expert.pipeline().vocab().len(),
        outcome.expert.classifier().family(),
        outcome.expert.cv_fbeta()
    );

    let extended = bundle
        .model
        .add_expert(outcome.expert)
        .map_err(CliError::usage)?;
    let new_bundle = ModelBundle::new(
        extended,
        Provenance {
            config_digest: bundle.provenance.config_digest.clone(),
            seed,
            created_at: chrono::Utc::now().to_rfc3339(),
        },
    );
    new_bundle.save(&args.out).map_err(CliError::runtime)?;
    println!(
        "saved {} ({} experts)",
        args.out.display(),
        new_bundle.model.experts().len()
    );
    Ok(())
}

fn same_file(a: &std::path::Path, b: &std::path::Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(ca), Ok(cb)) => ca == cb,
        _ => a == b,
    }
}
