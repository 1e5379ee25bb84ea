//! Mutual-information feature ranking and top-fraction selection.
//!
//! Features are binarized (presence/absence) and scored against the binary
//! label with the plug-in estimator over the 2x2 contingency table, in nats.
//! Only the induced ranking matters downstream, so the log base is free.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::featurize::{u64_prefix, FeatureVector};

/// Per-feature MI scores plus the induced ordering (descending score, ties
/// broken by ascending feature index).
#[derive(Debug, Clone, PartialEq)]
pub struct MIRanking {
    scores: Vec<f64>,
    order: Vec<u32>,
}

impl MIRanking {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Feature indices sorted by descending score.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn dim(&self) -> usize {
        self.scores.len()
    }
}

/// Plug-in mutual information of a 2x2 contingency table, in nats.
/// Cells are (present,positive), (present,negative), (absent,positive),
/// (absent,negative); `0 * ln 0 = 0`.
pub fn table_mi(pp: u64, pn: u64, ap: u64, an: u64) -> f64 {
    let n = (pp + pn + ap + an) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let present = (pp + pn) as f64;
    let absent = (ap + an) as f64;
    let pos = (pp + ap) as f64;
    let neg = (pn + an) as f64;
    let mut mi = 0.0;
    for (cell, row, col) in [
        (pp as f64, present, pos),
        (pn as f64, present, neg),
        (ap as f64, absent, pos),
        (an as f64, absent, neg),
    ] {
        if cell > 0.0 {
            mi += (cell / n) * ((cell * n) / (row * col)).ln();
        }
    }
    mi.max(0.0)
}

/// Scores every feature by mutual information between its binarized value
/// and the label. Requires at least two samples with both classes present.
pub fn mutual_information(x: &[FeatureVector], y: &[Label]) -> Result<MIRanking> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::BadFoldCount { k: 2, n });
    }
    let n_pos = y.iter().filter(|l| l.is_jailbreak()).count() as u64;
    let n_neg = n as u64 - n_pos;
    if n_pos == 0 {
        return Err(Error::MissingClass("jailbreak"));
    }
    if n_neg == 0 {
        return Err(Error::MissingClass("benign"));
    }

    let m = x[0].dim() as usize;
    let mut present_pos = vec![0u64; m];
    let mut present_neg = vec![0u64; m];
    for (v, label) in x.iter().zip(y) {
        if v.dim() as usize != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: v.dim() as usize,
            });
        }
        let counter = if label.is_jailbreak() {
            &mut present_pos
        } else {
            &mut present_neg
        };
        for &(i, _) in v.entries() {
            counter[i as usize] += 1;
        }
    }

    let scores: Vec<f64> = (0..m)
        .map(|i| {
            let pp = present_pos[i];
            let pn = present_neg[i];
            table_mi(pp, pn, n_pos - pp, n_neg - pn)
        })
        .collect();
    let mut order: Vec<u32> = (0..m as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("MI scores are finite")
            .then(a.cmp(&b))
    });
    Ok(MIRanking { scores, order })
}

/// Indices kept by top-fraction selection, re-indexed densely when applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SelectionMaskData", into = "SelectionMaskData")]
pub struct SelectionMask {
    kept: Vec<u32>,
    original_dim: u32,
    fraction: f64,
    digest: u64,
}

#[derive(Serialize, Deserialize, Clone)]
struct SelectionMaskData {
    kept: Vec<u32>,
    original_dim: u32,
    fraction: f64,
}

impl From<SelectionMaskData> for SelectionMask {
    fn from(d: SelectionMaskData) -> Self {
        SelectionMask::assemble(d.kept, d.original_dim, d.fraction)
    }
}

impl From<SelectionMask> for SelectionMaskData {
    fn from(m: SelectionMask) -> Self {
        SelectionMaskData {
            kept: m.kept,
            original_dim: m.original_dim,
            fraction: m.fraction,
        }
    }
}

impl SelectionMask {
    fn assemble(kept: Vec<u32>, original_dim: u32, fraction: f64) -> Self {
        let digest = {
            let mut h = Sha256::new();
            h.update(original_dim.to_le_bytes());
            for &i in &kept {
                h.update(i.to_le_bytes());
            }
            u64_prefix(&h.finalize())
        };
        Self {
            kept,
            original_dim,
            fraction,
            digest,
        }
    }

    /// Kept feature indices, sorted ascending.
    pub fn kept(&self) -> &[u32] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn original_dim(&self) -> u32 {
        self.original_dim
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// Identity of the masked feature space derived from the raw space.
    pub fn space_of(&self, raw_space: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(raw_space.to_le_bytes());
        h.update(self.digest.to_le_bytes());
        u64_prefix(&h.finalize())
    }

    /// Projects a vector onto the kept coordinates, re-indexing densely
    /// (0..len) while preserving relative order.
    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.dim() != self.original_dim {
            return Err(Error::DimensionMismatch {
                expected: self.original_dim as usize,
                got: v.dim() as usize,
            });
        }
        let entries: Vec<(u32, f64)> = v
            .entries()
            .iter()
            .filter_map(|&(i, val)| {
                self.kept
                    .binary_search(&i)
                    .ok()
                    .map(|pos| (pos as u32, val))
            })
            .collect();
        Ok(FeatureVector::from_parts(
            self.space_of(v.space()),
            self.kept.len() as u32,
            entries,
        ))
    }
}

/// Keeps the top `max(1, round(fraction * m))` features of the ranking.
pub fn select_top_fraction(ranking: &MIRanking, fraction: f64) -> Result<SelectionMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::BadSelectionFraction(fraction));
    }
    let m = ranking.dim();
    let keep = (((fraction * m as f64).round() as usize).max(1)).min(m);
    let mut kept: Vec<u32> = ranking.order[..keep].to_vec();
    kept.sort_unstable();
    Ok(SelectionMask::assemble(kept, m as u32, fraction))
}
