//! The mixture of jailbreak experts: one classifier per attack category,
//! each owning its full feature pipeline, combined by the max/avg rule.
//!
//! Inference takes the maximum posterior when any expert fires at or above
//! tau, otherwise the plain ensemble average. Because an average of values
//! all below tau stays below tau, the final label is equivalent to
//! `max_j p_j >= tau`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label};
use crate::error::{Error, Result};
use crate::featurize::{FeaturePipeline, NGramConfig, Tokenizer};
use crate::learners::{grid_search_cv, CvRecord, HyperGrid, TrainedClassifier};
use crate::select::{mutual_information, select_top_fraction};

/// Default decision threshold.
pub const DEFAULT_TAU: f64 = 0.5;

/// Which branch of the combination rule produced the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineRule {
    Max,
    Avg,
}

/// The max/avg combination rule: max posterior if it reaches tau, the
/// ensemble average otherwise.
pub fn combine_posteriors(probs: &[f64], tau: f64) -> (f64, CombineRule) {
    debug_assert!(!probs.is_empty());
    let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max >= tau {
        (max, CombineRule::Max)
    } else {
        (probs.iter().sum::<f64>() / probs.len() as f64, CombineRule::Avg)
    }
}

/// Inference outcome for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub label: Label,
    pub score: f64,
    pub rule: CombineRule,
    pub per_expert: BTreeMap<String, f64>,
}

/// One jailbreak expert: a category id, its own feature pipeline, and the
/// classifier the grid search selected for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    category: String,
    pipeline: FeaturePipeline,
    classifier: TrainedClassifier,
}

impl Expert {
    pub fn new(
        category: impl Into<String>,
        pipeline: FeaturePipeline,
        classifier: TrainedClassifier,
    ) -> Result<Self> {
        let expert = Self {
            category: category.into(),
            pipeline,
            classifier,
        };
        expert.validate()?;
        Ok(expert)
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn pipeline(&self) -> &FeaturePipeline {
        &self.pipeline
    }

    pub fn classifier(&self) -> &TrainedClassifier {
        &self.classifier
    }

    pub fn cv_fbeta(&self) -> f64 {
        self.classifier.cv_fbeta()
    }

    /// This expert's posterior for a prompt, through its own pipeline.
    pub fn posterior(&self, text: &str) -> Result<f64> {
        let v = self.pipeline.transform(text)?;
        self.classifier.predict_proba(&v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.category.trim().is_empty() {
            return Err(Error::InvalidBundle("expert category is empty".into()));
        }
        if self.pipeline.output_dim() != self.classifier.dim() as usize {
            return Err(Error::DimensionMismatch {
                expected: self.pipeline.output_dim(),
                got: self.classifier.dim() as usize,
            });
        }
        if self.pipeline.output_space() != self.classifier.space() {
            return Err(Error::SpaceMismatch {
                expected: format!("{:016x}", self.pipeline.output_space()),
                got: format!("{:016x}", self.classifier.space()),
            });
        }
        Ok(())
    }
}

/// Trains experts with a shared featurization recipe.
///
/// `select_fraction` turns on per-expert mutual-information masking.
/// `mi_corpus`, when set, supplies the examples used to rank features
/// (global mode); by default each expert ranks on its own training data.
pub struct ExpertTrainer<'a> {
    pub tokenizer: &'a Tokenizer,
    pub ngram: NGramConfig,
    pub select_fraction: Option<f64>,
    pub mi_corpus: Option<&'a Dataset>,
    pub grid: &'a HyperGrid,
    pub seed: u64,
}

/// A trained expert plus the grid-search audit trail.
pub struct TrainOutcome {
    pub expert: Expert,
    pub cv_records: Vec<CvRecord>,
}

impl ExpertTrainer<'_> {
    /// Fits one expert on `data`, which must be the union of benign
    /// examples and jailbreak examples of exactly `category`.
    pub fn train(&self, category: &str, data: &Dataset) -> Result<TrainOutcome> {
        let mut has_benign = false;
        let mut has_jailbreak = false;
        for e in data.iter() {
            match e.label() {
                Label::Benign => has_benign = true,
                Label::Jailbreak => {
                    has_jailbreak = true;
                    match e.category() {
                        Some(c) if c != category => {
                            return Err(Error::ForeignCategory {
                                expected: category.to_owned(),
                                found: c.to_owned(),
                            })
                        }
                        _ => {}
                    }
                }
            }
        }
        if !has_benign {
            return Err(Error::MissingClass("benign"));
        }
        if !has_jailbreak {
            return Err(Error::MissingClass("jailbreak"));
        }

        let mut pipeline = FeaturePipeline::fit(self.tokenizer.clone(), self.ngram, data)?;
        if let Some(fraction) = self.select_fraction {
            let ranking_data = self.mi_corpus.unwrap_or(data);
            let xs: Vec<_> = ranking_data
                .iter()
                .map(|e| pipeline.transform_unmasked(e.text()))
                .collect::<Result<_>>()?;
            let ranking = mutual_information(&xs, &ranking_data.labels())?;
            let mask = select_top_fraction(&ranking, fraction)?;
            pipeline = pipeline.with_mask(mask)?;
        }

        let outcome = grid_search_cv(data, &pipeline, self.grid, self.seed)?;
        Ok(TrainOutcome {
            expert: Expert::new(category, pipeline, outcome.best)?,
            cv_records: outcome.records,
        })
    }
}

/// The assembled guardrail model. Immutable after construction; adding an
/// expert produces a new value and leaves every existing expert untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MojeModel {
    experts: Vec<Expert>,
    tau: f64,
    version: String,
}

impl MojeModel {
    pub fn new(experts: Vec<Expert>, tau: f64) -> Result<Self> {
        let model = Self {
            experts,
            tau,
            version: crate::modelstore::FORMAT_VERSION.to_owned(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn experts(&self) -> &[Expert] {
        &self.experts
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn validate(&self) -> Result<()> {
        if self.experts.is_empty() {
            return Err(Error::NoExperts);
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::OutOfRange {
                what: "tau",
                range: "in (0, 1)",
                value: self.tau,
            });
        }
        let mut seen = BTreeSet::new();
        for expert in &self.experts {
            expert.validate()?;
            if !seen.insert(expert.category()) {
                return Err(Error::DuplicateCategory(expert.category().to_owned()));
            }
            if !(0.0..=1.0).contains(&expert.cv_fbeta()) {
                return Err(Error::OutOfRange {
                    what: "cv_fbeta",
                    range: "in [0, 1]",
                    value: expert.cv_fbeta(),
                });
            }
        }
        Ok(())
    }

    /// Scores one prompt: every expert's posterior through its own
    /// pipeline, combined by the max/avg rule; jailbreak iff score >= tau.
    pub fn infer(&self, text: &str) -> Result<Verdict> {
        let mut per_expert = BTreeMap::new();
        let mut probs = Vec::with_capacity(self.experts.len());
        for expert in &self.experts {
            let p = expert.posterior(text)?;
            probs.push(p);
            per_expert.insert(expert.category().to_owned(), p);
        }
        let (score, rule) = combine_posteriors(&probs, self.tau);
        Ok(Verdict {
            label: if score >= self.tau {
                Label::Jailbreak
            } else {
                Label::Benign
            },
            score,
            rule,
            per_expert,
        })
    }

    /// Element-wise [`infer`](Self::infer) over a batch; order preserved,
    /// experts evaluated concurrently across prompts.
    pub fn infer_batch<I, S>(&self, texts: I) -> Result<Vec<Verdict>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str> + Sync,
    {
        let texts: Vec<S> = texts.into_iter().collect();
        texts
            .par_iter()
            .map(|t| self.infer(t.as_ref()))
            .collect()
    }

    /// Returns a model extended with `expert`. Existing experts are shared
    /// unchanged; duplicate categories are rejected.
    pub fn add_expert(&self, expert: Expert) -> Result<MojeModel> {
        if self.experts.iter().any(|e| e.category() == expert.category()) {
            return Err(Error::DuplicateCategory(expert.category().to_owned()));
        }
        let mut experts = self.experts.clone();
        experts.push(expert);
        MojeModel::new(experts, self.tau)
    }

    /// Same model with a different decision threshold.
    pub fn with_tau(&self, tau: f64) -> Result<MojeModel> {
        MojeModel::new(self.experts.clone(), tau)
    }
}
