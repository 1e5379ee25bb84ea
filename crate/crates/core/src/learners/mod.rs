//! Trainable tabular classifiers with posterior-probability output, plus
//! the k-fold grid search that picks each expert's model.

pub mod boosted;
pub mod logistic;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use boosted::{BoostedTreesModel, GbtParams, Node, Tree};
pub use logistic::{LogisticModel, LrParams};

use crate::corpus::{kfold_indices, Dataset, Label};
use crate::error::{Error, Result};
use crate::featurize::{FeaturePipeline, FeatureVector};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    Logistic,
    Boosted,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFamily::Logistic => write!(f, "LR"),
            ModelFamily::Boosted => write!(f, "GBT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ClassifierModel {
    Logistic(LogisticModel),
    Boosted(BoostedTreesModel),
}

/// A fitted classifier pinned to the feature space it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    model: ClassifierModel,
    dim: u32,
    space: u64,
    cv_fbeta: f64,
}

impl TrainedClassifier {
    pub fn new(model: ClassifierModel, dim: u32, space: u64, cv_fbeta: f64) -> Result<Self> {
        let model_dim = match &model {
            ClassifierModel::Logistic(m) => m.dim(),
            ClassifierModel::Boosted(m) => m.dim(),
        };
        if model_dim != dim as usize {
            return Err(Error::DimensionMismatch {
                expected: dim as usize,
                got: model_dim,
            });
        }
        if !(0.0..=1.0).contains(&cv_fbeta) {
            return Err(Error::OutOfRange {
                what: "cv_fbeta",
                range: "in [0, 1]",
                value: cv_fbeta,
            });
        }
        Ok(Self {
            model,
            dim,
            space,
            cv_fbeta,
        })
    }

    pub fn family(&self) -> ModelFamily {
        match self.model {
            ClassifierModel::Logistic(_) => ModelFamily::Logistic,
            ClassifierModel::Boosted(_) => ModelFamily::Boosted,
        }
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn space(&self) -> u64 {
        self.space
    }

    /// Mean F_beta the winning setting achieved across validation folds.
    pub fn cv_fbeta(&self) -> f64 {
        self.cv_fbeta
    }

    /// Posterior probability of the positive class, after verifying the
    /// vector belongs to the fitted feature space.
    pub fn predict_proba(&self, v: &FeatureVector) -> Result<f64> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim as usize,
                got: v.dim() as usize,
            });
        }
        if v.space() != self.space {
            return Err(Error::SpaceMismatch {
                expected: format!("{:016x}", self.space),
                got: format!("{:016x}", v.space()),
            });
        }
        match &self.model {
            ClassifierModel::Logistic(m) => m.predict_proba(v),
            ClassifierModel::Boosted(m) => m.predict_proba(v),
        }
    }
}

/// Grid of boosted-tree settings, expanded as the cartesian product in
/// declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtGrid {
    #[serde(default = "default_gbt_num_trees")]
    pub num_trees: Vec<usize>,
    #[serde(default = "default_gbt_max_depth")]
    pub max_depth: Vec<usize>,
    #[serde(default = "default_gbt_learning_rate")]
    pub learning_rate: Vec<f64>,
    #[serde(default = "default_min_child_weight")]
    pub min_child_weight: f64,
}

fn default_gbt_num_trees() -> Vec<usize> {
    vec![50, 100, 200]
}

fn default_gbt_max_depth() -> Vec<usize> {
    vec![3, 6]
}

fn default_gbt_learning_rate() -> Vec<f64> {
    vec![0.1, 0.3]
}

fn default_min_child_weight() -> f64 {
    1.0
}

impl Default for GbtGrid {
    fn default() -> Self {
        Self {
            num_trees: default_gbt_num_trees(),
            max_depth: default_gbt_max_depth(),
            learning_rate: default_gbt_learning_rate(),
            min_child_weight: default_min_child_weight(),
        }
    }
}

/// The model-selection grid: LR l2 values and GBT settings, scored by mean
/// F_beta over `cv_folds` stratified folds at the 0.5 decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    #[serde(default = "default_lr_l2")]
    pub lr_l2: Vec<f64>,
    #[serde(default)]
    pub gbt: GbtGrid,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_lr_l2() -> Vec<f64> {
    vec![0.01, 0.1, 1.0, 10.0]
}

fn default_cv_folds() -> usize {
    5
}

fn default_beta() -> f64 {
    0.5
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lr_l2: default_lr_l2(),
            gbt: GbtGrid::default(),
            cv_folds: default_cv_folds(),
            beta: default_beta(),
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lr_l2.is_empty() {
            return Err(Error::EmptyGrid("lr_l2"));
        }
        if self.gbt.num_trees.is_empty()
            || self.gbt.max_depth.is_empty()
            || self.gbt.learning_rate.is_empty()
        {
            return Err(Error::EmptyGrid("gbt"));
        }
        if self.cv_folds < 2 {
            return Err(Error::BadFoldCount {
                k: self.cv_folds,
                n: usize::MAX,
            });
        }
        if !(self.beta > 0.0) {
            return Err(Error::BadBeta(self.beta));
        }
        Ok(())
    }

    /// All settings in evaluation order: LR first, then the GBT product.
    fn settings(&self) -> Vec<Setting> {
        let mut out: Vec<Setting> = self.lr_l2.iter().map(|&l2| Setting::Lr { l2 }).collect();
        for &num_trees in &self.gbt.num_trees {
            for &max_depth in &self.gbt.max_depth {
                for &learning_rate in &self.gbt.learning_rate {
                    out.push(Setting::Gbt(GbtParams {
                        num_trees,
                        max_depth,
                        learning_rate,
                        min_child_weight: self.gbt.min_child_weight,
                    }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Setting {
    Lr { l2: f64 },
    Gbt(GbtParams),
}

impl Setting {
    fn family(&self) -> ModelFamily {
        match self {
            Setting::Lr { .. } => ModelFamily::Logistic,
            Setting::Gbt(_) => ModelFamily::Boosted,
        }
    }

    fn describe(&self) -> String {
        match self {
            Setting::Lr { l2 } => format!("l2={l2}"),
            Setting::Gbt(p) => format!(
                "trees={} depth={} lr={}",
                p.num_trees, p.max_depth, p.learning_rate
            ),
        }
    }

    fn fit(&self, x: &[FeatureVector], y: &[Label]) -> Result<ClassifierModel> {
        match self {
            Setting::Lr { l2 } => {
                let params = LrParams {
                    l2: *l2,
                    ..Default::default()
                };
                Ok(ClassifierModel::Logistic(LogisticModel::fit(x, y, &params)?))
            }
            Setting::Gbt(params) => Ok(ClassifierModel::Boosted(BoostedTreesModel::fit(
                x, y, params,
            )?)),
        }
    }
}

/// One grid setting's cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub family: ModelFamily,
    pub params: String,
    pub mean_fbeta: f64,
    pub fold_fbetas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: TrainedClassifier,
    pub records: Vec<CvRecord>,
}

/// Runs the k-fold grid search over both model families and refits the
/// winner on the full training data. The winner maximizes mean F_beta; ties
/// go to the earliest setting in grid order (LR before GBT). Settings that
/// fail to train are skipped unless every setting fails, in which case the
/// first error propagates.
pub fn grid_search_cv(
    data: &Dataset,
    pipeline: &FeaturePipeline,
    grid: &HyperGrid,
    seed: u64,
) -> Result<GridSearchOutcome> {
    grid.validate()?;
    let labels = data.labels();
    let xs: Vec<FeatureVector> = data
        .iter()
        .map(|e| pipeline.transform(e.text()))
        .collect::<Result<_>>()?;

    let folds = kfold_indices(&labels, grid.cv_folds, seed)?;
    let fold_sets: Vec<FoldSet> = folds
        .iter()
        .map(|val_idx| FoldSet::build(&xs, &labels, val_idx))
        .collect();

    let settings = grid.settings();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut first_error: Option<Error> = None;

    for (pos, setting) in settings.iter().enumerate() {
        let mut fold_scores = Vec::with_capacity(fold_sets.len());
        let mut failed = false;
        for fold in &fold_sets {
            match setting.fit(&fold.train_x, &fold.train_y) {
                Ok(model) => {
                    let preds: Vec<f64> = fold
                        .val_x
                        .iter()
                        .map(|v| predict(&model, v))
                        .collect::<Result<_>>()?;
                    let c = metrics::confusion(&preds, &fold.val_y, 0.5)?;
                    fold_scores.push(metrics::f_beta(c.precision(), c.recall(), grid.beta)?);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        records.push(CvRecord {
            family: setting.family(),
            params: setting.describe(),
            mean_fbeta: mean,
            fold_fbetas: fold_scores,
        });
        // Strict improvement keeps the earliest setting on ties, so LR wins
        // over GBT and declaration order breaks ties within a family.
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, pos));
        }
    }

    match best {
        Some((mean, pos)) => {
            let model = settings[pos].fit(&xs, &labels)?;
            Ok(GridSearchOutcome {
                best: TrainedClassifier::new(
                    model,
                    pipeline.output_dim() as u32,
                    pipeline.output_space(),
                    mean.clamp(0.0, 1.0),
                )?,
                records,
            })
        }
        None => Err(first_error.unwrap_or(Error::EmptyGrid("hyperparameters"))),
    }
}

fn predict(model: &ClassifierModel, v: &FeatureVector) -> Result<f64> {
    match model {
        ClassifierModel::Logistic(m) => m.predict_proba(v),
        ClassifierModel::Boosted(m) => m.predict_proba(v),
    }
}

struct FoldSet {
    train_x: Vec<FeatureVector>,
    train_y: Vec<Label>,
    val_x: Vec<FeatureVector>,
    val_y: Vec<Label>,
}

impl FoldSet {
    fn build(xs: &[FeatureVector], ys: &[Label], val_idx: &[usize]) -> FoldSet {
        let mut in_val = vec![false; xs.len()];
        for &i in val_idx {
            in_val[i] = true;
        }
        let mut set = FoldSet {
            train_x: Vec::new(),
            train_y: Vec::new(),
            val_x: Vec::new(),
            val_y: Vec::new(),
        };
        for i in 0..xs.len() {
            if in_val[i] {
                set.val_x.push(xs[i].clone());
                set.val_y.push(ys[i]);
            } else {
                set.train_x.push(xs[i].clone());
                set.train_y.push(ys[i]);
            }
        }
        set
    }
}
