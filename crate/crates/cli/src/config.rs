//! Layered configuration: an optional TOML/JSON config file provides
//! defaults, command-line flags override it, and anything still unset falls
//! back to the documented defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use moje_core::corpus::{Dataset, SplitSpec};
use moje_core::featurize::{
    NGramConfig, NGramOrders, Tokenizer, TokenizerKind, TokenizerSpec, Weighting,
};
use moje_core::learners::HyperGrid;

use crate::CliError;

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerArg {
    Char,
    Word,
    Subword,
}

impl From<TokenizerArg> for TokenizerKind {
    fn from(v: TokenizerArg) -> Self {
        match v {
            TokenizerArg::Char => TokenizerKind::Char,
            TokenizerArg::Word => TokenizerKind::Word,
            TokenizerArg::Subword => TokenizerKind::Subword,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Count,
    Tfidf,
}

impl From<WeightingArg> for Weighting {
    fn from(v: WeightingArg) -> Self {
        match v {
            WeightingArg::Count => Weighting::Count,
            WeightingArg::Tfidf => Weighting::TfIdf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
pub enum SelectScope {
    /// Rank features on each expert's own training subset.
    #[value(name = "per-expert")]
    #[serde(rename = "per-expert")]
    PerExpert,
    /// Rank features on the full training corpus through each expert's
    /// pipeline.
    #[value(name = "global")]
    #[serde(rename = "global")]
    Global,
}

/// Featurization flags shared by train / sweep / select / add-expert.
#[derive(Debug, Clone, Default, Args)]
pub struct FeatureArgs {
    /// Tokenizer kind.
    #[arg(long, value_enum)]
    pub tokenizer: Option<TokenizerArg>,
    /// Lowercase text before tokenizing (default: true for char/word,
    /// false for subword).
    #[arg(long)]
    pub lowercase: Option<bool>,
    /// Subword vocabulary file, one token per line (subword only).
    #[arg(long)]
    pub subword_vocab: Option<PathBuf>,
    /// N-gram orders: uni, bi, or uni+bi.
    #[arg(long, value_parser = clap::value_parser!(NGramOrders))]
    pub ngram: Option<NGramOrders>,
    /// Feature weighting.
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
}

/// `[tokenizer]` section of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    pub kind: Option<TokenizerArg>,
    pub lowercase: Option<bool>,
    pub vocab: Option<PathBuf>,
}

/// `[features]` section of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub ngram: Option<String>,
    pub weighting: Option<WeightingArg>,
    pub select_fraction: Option<f64>,
    pub select_scope: Option<SelectScope>,
}

/// `[split]` section of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub stratify: Option<bool>,
}

/// Training config file (TOML or JSON).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub data: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub split: SplitSection,
    /// Path to a hyperparameter grid file (TOML or JSON).
    pub grid: Option<PathBuf>,
    pub tau: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&raw)
                .map_err(|e| format!("{}: {e}", path.display()))
                .map_err(CliError::Usage)?,
            _ => toml::from_str(&raw)
                .map_err(|e| format!("{}: {e}", path.display()))
                .map_err(CliError::Usage)?,
        };
        Ok(parsed)
    }
}

/// Every knob of a training run, fully resolved.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub data: Vec<PathBuf>,
    pub out: PathBuf,
    pub tokenizer_spec: TokenizerSpec,
    pub ngram: NGramConfig,
    pub select_fraction: Option<f64>,
    pub select_scope: SelectScope,
    pub grid: HyperGrid,
    pub split: SplitSpec,
    pub tau: f64,
}

impl TrainPlan {
    pub fn tokenizer(&self) -> Result<Tokenizer, CliError> {
        Tokenizer::from_spec(&self.tokenizer_spec).map_err(CliError::usage)
    }

    /// Stable digest of the run configuration, recorded in provenance.
    pub fn config_digest(&self) -> String {
        #[derive(Serialize)]
        struct Digestable<'a> {
            data: &'a [PathBuf],
            tokenizer: &'a TokenizerSpec,
            ngram: &'a NGramConfig,
            select_fraction: Option<f64>,
            grid: &'a HyperGrid,
            split: &'a SplitSpec,
            tau: f64,
        }
        let json = serde_json::to_vec(&Digestable {
            data: &self.data,
            tokenizer: &self.tokenizer_spec,
            ngram: &self.ngram,
            select_fraction: self.select_fraction,
            grid: &self.grid,
            split: &self.split,
            tau: self.tau,
        })
        .expect("digest serialization cannot fail");
        let mut h = Sha256::new();
        h.update(&json);
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub struct PlanInputs<'a> {
    pub config: Option<&'a Path>,
    pub data: &'a [PathBuf],
    pub out: Option<&'a Path>,
    pub features: &'a FeatureArgs,
    pub select_fraction: Option<f64>,
    pub select_scope: Option<SelectScope>,
    pub grid: Option<&'a Path>,
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
    pub stratify: Option<bool>,
    pub tau: Option<f64>,
}

/// Merges config file and flags (flags win) into a [`TrainPlan`].
pub fn resolve_plan(inputs: PlanInputs<'_>) -> Result<TrainPlan, CliError> {
    let file = match inputs.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let data: Vec<PathBuf> = if inputs.data.is_empty() {
        file.data.clone()
    } else {
        inputs.data.to_vec()
    };
    if data.is_empty() {
        return Err(CliError::Usage(
            "no datasets given; pass --data or set `data` in the config file".into(),
        ));
    }

    let out = inputs
        .out
        .map(Path::to_path_buf)
        .or(file.output.clone())
        .ok_or_else(|| {
            CliError::Usage("no output path; pass --out or set `output` in the config".into())
        })?;

    let tokenizer_spec = resolve_tokenizer(
        inputs.features,
        &file.tokenizer,
    )?;
    let ngram = resolve_ngram(inputs.features, &file.features)?;

    let select_fraction = inputs
        .select_fraction
        .or(file.features.select_fraction);
    if let Some(f) = select_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::Usage(format!(
                "--select-fraction {f} is outside (0, 1]"
            )));
        }
    }
    let select_scope = inputs
        .select_scope
        .or(file.features.select_scope)
        .unwrap_or(SelectScope::PerExpert);

    let grid = match inputs.grid.map(Path::to_path_buf).or(file.grid.clone()) {
        Some(path) => load_grid(&path)?,
        None => HyperGrid::default(),
    };

    let defaults = SplitSpec::default();
    let split = SplitSpec {
        test_fraction: inputs
            .test_fraction
            .or(file.split.test_fraction)
            .unwrap_or(defaults.test_fraction),
        val_fraction: inputs
            .val_fraction
            .or(file.split.val_fraction)
            .unwrap_or(defaults.val_fraction),
        seed: inputs.seed.or(file.split.seed).unwrap_or(defaults.seed),
        stratify: inputs
            .stratify
            .or(file.split.stratify)
            .unwrap_or(defaults.stratify),
    };

    let tau = inputs.tau.or(file.tau).unwrap_or(DEFAULT_TAU);
    if !(tau > 0.0 && tau < 1.0) {
        return Err(CliError::Usage(format!("--tau {tau} is outside (0, 1)")));
    }

    Ok(TrainPlan {
        data,
        out,
        tokenizer_spec,
        ngram,
        select_fraction,
        select_scope,
        grid,
        split,
        tau,
    })
}

pub fn resolve_tokenizer(
    flags: &FeatureArgs,
    file: &TokenizerSection,
) -> Result<TokenizerSpec, CliError> {
    let kind: TokenizerKind = flags
        .tokenizer
        .or(file.kind)
        .map(Into::into)
        .unwrap_or(TokenizerKind::Word);
    let lowercase = flags
        .lowercase
        .or(file.lowercase)
        .unwrap_or_else(|| TokenizerSpec::default_lowercase(kind));
    let subword_vocab = flags
        .subword_vocab
        .clone()
        .or_else(|| file.vocab.clone());
    let spec = TokenizerSpec {
        kind,
        lowercase,
        subword_vocab,
    };
    spec.validate().map_err(CliError::usage)?;
    Ok(spec)
}

pub fn resolve_ngram(
    flags: &FeatureArgs,
    file: &FeaturesSection,
) -> Result<NGramConfig, CliError> {
    let orders = match (&flags.ngram, &file.ngram) {
        (Some(o), _) => *o,
        (None, Some(s)) => s
            .parse::<NGramOrders>()
            .map_err(|e| CliError::Usage(format!("config `features.ngram`: {e}")))?,
        (None, None) => NGramOrders::Uni,
    };
    let weighting: Weighting = flags
        .weighting
        .or(file.weighting)
        .map(Into::into)
        .unwrap_or(Weighting::Count);
    Ok(NGramConfig { orders, weighting })
}

pub fn load_grid(path: &Path) -> Result<HyperGrid, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read grid {}: {e}", path.display())))?;
    let grid: HyperGrid = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&raw)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        _ => toml::from_str(&raw)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
    };
    grid.validate().map_err(CliError::usage)?;
    Ok(grid)
}

/// Loads and concatenates datasets; missing or malformed inputs are usage
/// errors (exit 2).
pub fn load_datasets(paths: &[PathBuf], name: &str) -> Result<Dataset, CliError> {
    let mut parts = Vec::new();
    for path in paths {
        parts.push(Dataset::load_path(path).map_err(CliError::usage)?);
    }
    Ok(Dataset::concat(name, &parts))
}
