use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // -- corpus --------------------------------------------------------
    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: unknown label {value:?} (expected \"jailbreak\" or \"benign\")")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("example text is empty after trimming")]
    EmptyText,
    #[error("benign example must not carry a category (got {0:?})")]
    CategoryOnBenign(String),
    #[error("jailbreak example is missing a category")]
    MissingCategory,
    #[error("dataset {0:?} is empty")]
    EmptyDataset(String),
    #[error("fraction {value} for {what} is outside {range}")]
    BadFraction {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("stratum {stratum:?} has {size} examples; at least {min} required to stratify")]
    StratumTooSmall {
        stratum: String,
        size: usize,
        min: usize,
    },
    #[error("cannot build {k} folds from {n} examples")]
    BadFoldCount { k: usize, n: usize },

    // -- featurize -----------------------------------------------------
    #[error("subword tokenizer requires a vocabulary file")]
    SubwordVocabMissing,
    #[error("{0:?} tokenizer must not set a subword vocabulary file")]
    UnexpectedSubwordVocab(&'static str),
    #[error("subword vocabulary at {0} contains no usable tokens")]
    EmptySubwordVocab(PathBuf),
    #[error("corpus produced no tokens")]
    NoTokens,
    #[error("feature space mismatch: expected {expected}, got {got}")]
    SpaceMismatch { expected: String, got: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    // -- select / learners ---------------------------------------------
    #[error("inputs must contain both classes ({0} is missing)")]
    MissingClass(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("selection fraction {0} is outside (0, 1]")]
    BadSelectionFraction(f64),
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("{what} must be {range}, got {value}")]
    OutOfRange {
        what: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("hyperparameter grid has no settings for {0}")]
    EmptyGrid(&'static str),

    // -- moje ------------------------------------------------------------
    #[error("expert category {0:?} already present in the model")]
    DuplicateCategory(String),
    #[error("dataset for expert {expected:?} contains jailbreak examples of category {found:?}")]
    ForeignCategory { expected: String, found: String },
    #[error("model has no experts")]
    NoExperts,

    // -- metrics ---------------------------------------------------------
    #[error("dataset {0:?} mixes jailbreak and benign examples")]
    MixedDataset(String),

    // -- modelstore ------------------------------------------------------
    #[error("corrupt bundle at {path}: {msg}")]
    CorruptBundle { path: PathBuf, msg: String },
    #[error("unsupported bundle format version {found:?} (supported: {supported:?})")]
    VersionMismatch { found: String, supported: String },
    #[error("bundle failed validation: {0}")]
    InvalidBundle(String),
}

pub type Result<T> = std::result::Result<T, Error>;
