//! Evaluation metrics: confusion counts, F_beta, rank-based AUC, and
//! per-dataset true/false-positive rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label};
use crate::error::{Error, Result};
use crate::moje::MojeModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn accuracy(&self) -> f64 {
        ratio(
            self.true_positives + self.true_negatives,
            self.total(),
        )
    }

    /// tp / (tp + fp); 0/0 -> 0.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    /// tp / (tp + fn); 0/0 -> 0.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn true_positive_rate(&self) -> f64 {
        self.recall()
    }

    /// fp / (fp + tn); 0/0 -> 0.
    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.false_positives, self.false_positives + self.true_negatives)
    }

    pub fn f_beta(&self, beta: f64) -> Result<f64> {
        f_beta(self.precision(), self.recall(), beta)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F_beta = (1 + beta^2) * precision * recall / (beta^2 * precision + recall),
/// with 0 when precision = recall = 0. beta < 1 weights precision over recall.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::BadBeta(beta));
    }
    for (what, v) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                what,
                range: "in [0, 1]",
                value: v,
            });
        }
    }
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * precision * recall / den)
}

/// Thresholded confusion counts. A score at or above the threshold is a
/// positive (jailbreak) prediction, matching the ensemble's decision rule.
pub fn confusion(scores: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::BadFraction {
            what: "threshold",
            value: threshold,
            range: "(0, 1)",
        });
    }
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l.is_jailbreak()) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => c.true_negatives += 1,
        }
    }
    Ok(c)
}

/// Rank-based AUC (Mann-Whitney): the probability that a random positive
/// outranks a random negative, with ties counted half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score"));
    }
    let n_pos = labels.iter().filter(|l| l.is_jailbreak()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::MissingClass("jailbreak"));
    }
    if n_neg == 0 {
        return Err(Error::MissingClass("benign"));
    }

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average ranks over tie groups; group averages are exact multiples of
    // one half, so the pairwise-counting formulation is matched bit for bit.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0; // ranks are 1-based
        for &k in &idx[i..j] {
            if labels[k].is_jailbreak() {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateKind {
    /// Share of an all-jailbreak dataset flagged at tau.
    TruePositive,
    /// Share of an all-benign dataset flagged at tau.
    FalsePositive,
}

impl RateKind {
    pub fn short_name(self) -> &'static str {
        match self {
            RateKind::TruePositive => "TPr",
            RateKind::FalsePositive => "FPr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRate {
    pub kind: RateKind,
    pub rate: f64,
    pub count: usize,
}

/// TPr per all-jailbreak dataset and FPr per all-benign dataset at the
/// model's tau. Mixed-label datasets are rejected.
pub fn per_dataset_rates(
    model: &MojeModel,
    datasets: &BTreeMap<String, Dataset>,
) -> Result<BTreeMap<String, DatasetRate>> {
    let mut out = BTreeMap::new();
    for (name, ds) in datasets {
        if ds.is_empty() {
            return Err(Error::EmptyDataset(name.clone()));
        }
        let label = ds.examples()[0].label();
        if ds.iter().any(|e| e.label() != label) {
            return Err(Error::MixedDataset(name.clone()));
        }
        let verdicts = model.infer_batch(ds.iter().map(|e| e.text()))?;
        let flagged = verdicts
            .iter()
            .filter(|v| v.label.is_jailbreak())
            .count();
        let rate = flagged as f64 / ds.len() as f64;
        let kind = if label.is_jailbreak() {
            RateKind::TruePositive
        } else {
            RateKind::FalsePositive
        };
        out.insert(
            name.clone(),
            DatasetRate {
                kind,
                rate,
                count: ds.len(),
            },
        );
    }
    Ok(out)
}

/// Aggregate evaluation report. `auc` is absent when the scorer exposes no
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f_beta: f64,
    pub recall: f64,
    pub precision: f64,
    pub beta: f64,
    #[serde(default)]
    pub per_dataset: BTreeMap<String, DatasetRate>,
}

impl MetricReport {
    /// Builds the aggregate report from scores and labels at a decision
    /// threshold. AUC is marked absent when only one class is present.
    pub fn from_scores(
        scores: &[f64],
        labels: &[Label],
        beta: f64,
        threshold: f64,
    ) -> Result<MetricReport> {
        let c = confusion(scores, labels, threshold)?;
        let auc = match auc(scores, labels) {
            Ok(a) => Some(a),
            Err(Error::MissingClass(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricReport {
            auc,
            accuracy: c.accuracy(),
            f_beta: c.f_beta(beta)?,
            recall: c.recall(),
            precision: c.precision(),
            beta,
            per_dataset: BTreeMap::new(),
        })
    }

    /// CSV with one aggregate row, then one row per named dataset.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric_set,auc,acc,f_beta,recall,precision\n");
        let auc = self
            .auc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "aggregate,{auc},{:.6},{:.6},{:.6},{:.6}",
            self.accuracy, self.f_beta, self.recall, self.precision
        );
        if !self.per_dataset.is_empty() {
            out.push_str("dataset,kind,rate,count\n");
            for (name, r) in &self.per_dataset {
                let _ = writeln!(out, "{name},{},{:.6},{}", r.kind.short_name(), r.rate, r.count);
            }
        }
        out
    }

    /// Fixed-width table in AUC / ACC / F_beta / Recall / Precision order.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8} {:>8} {:>9}",
            "", "AUC", "ACC", "F_beta", "Recall", "Precision"
        );
        let auc = self
            .auc
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>9.4}",
            "aggregate", auc, self.accuracy, self.f_beta, self.recall, self.precision
        );
        if !self.per_dataset.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<20} {:>5} {:>8} {:>7}", "dataset", "kind", "rate", "n");
            for (name, r) in &self.per_dataset {
                let _ = writeln!(
                    out,
                    "{:<20} {:>5} {:>8.4} {:>7}",
                    name,
                    r.kind.short_name(),
                    r.rate,
                    r.count
                );
            }
        }
        out
    }
}
