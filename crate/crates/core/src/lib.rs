//! A trainable, modular guardrail that flags jailbreak prompts before they
//! reach an LLM.
//!
//! The model is a mixture of per-attack-category experts. Each expert is a
//! cheap tabular classifier (logistic regression or gradient-boosted trees)
//! over n-gram counts of the prompt, fitted on benign data plus one attack
//! category, with optional mutual-information feature selection. At
//! inference time the experts' posteriors are combined with a max/avg rule
//! against a threshold tau. New attack categories are added by training one
//! more expert; existing experts are never touched.
//!
//! Module map:
//! - [`corpus`]: dataset ingestion, splits, per-category partitions
//! - [`featurize`]: tokenizers, n-gram vocabularies, sparse vectors
//! - [`select`]: mutual-information feature ranking and masking
//! - [`learners`]: LR / GBT classifiers and the cross-validated grid search
//! - [`moje`]: expert training and the max/avg ensemble
//! - [`metrics`]: F_beta, AUC, confusion counts, per-dataset rates
//! - [`modelstore`]: versioned single-file model bundles

pub mod corpus;
pub mod error;
pub mod featurize;
pub mod learners;
pub mod metrics;
pub mod modelstore;
pub mod moje;
pub mod select;

pub use corpus::{Dataset, Label, LabeledExample, SplitSpec};
pub use error::{Error, Result};
pub use featurize::{
    FeaturePipeline, FeatureVector, NGramConfig, NGramOrders, Tokenizer, TokenizerKind,
    TokenizerSpec, Vocabulary, Weighting,
};
pub use learners::{HyperGrid, TrainedClassifier};
pub use metrics::MetricReport;
pub use modelstore::{ModelBundle, Provenance};
pub use moje::{combine_posteriors, CombineRule, Expert, ExpertTrainer, MojeModel, Verdict};
pub use select::{mutual_information, select_top_fraction, MIRanking, SelectionMask};
