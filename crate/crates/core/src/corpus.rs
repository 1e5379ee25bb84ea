//! Dataset ingestion, labeling, category partitioning, and deterministic
//! splitting.
//!
//! A corpus is a flat list of labeled prompts. Jailbreak prompts carry a
//! category identifier; the per-category partitions (all benign prompts plus
//! one category's jailbreaks) are the training sets of the individual
//! experts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class of a prompt. `Jailbreak` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Jailbreak,
    Benign,
}

impl Label {
    pub fn is_jailbreak(self) -> bool {
        self == Label::Jailbreak
    }

    /// Case-insensitive parse of a label string.
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jailbreak" => Some(Label::Jailbreak),
            "benign" => Some(Label::Benign),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Jailbreak => write!(f, "jailbreak"),
            Label::Benign => write!(f, "benign"),
        }
    }
}

/// A single prompt with its label and (for jailbreaks) an attack category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledExample {
    text: String,
    label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<String>,
}

impl LabeledExample {
    /// Builds an example, enforcing that the text is non-empty after
    /// trimming and that only jailbreak examples carry a category.
    pub fn new(text: impl Into<String>, label: Label, category: Option<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if let (Label::Benign, Some(cat)) = (label, &category) {
            return Err(Error::CategoryOnBenign(cat.clone()));
        }
        Ok(Self {
            text,
            label,
            category,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn category(&self) -> Option<&str> {
        self.category.as_deref()
    }
}

/// Raw JSONL record; unknown fields (e.g. `source`) are accepted and ignored.
#[derive(Deserialize)]
struct RawRecord {
    text: String,
    label: String,
    #[serde(default)]
    category: Option<String>,
}

/// An ordered, immutable collection of labeled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>) -> Self {
        Self {
            name: name.into(),
            examples,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label()).collect()
    }

    /// Distinct jailbreak categories in first-appearance-independent
    /// (sorted) order.
    pub fn categories(&self) -> Vec<String> {
        let mut cats: Vec<String> = self
            .examples
            .iter()
            .filter_map(|e| e.category().map(str::to_owned))
            .collect();
        cats.sort();
        cats.dedup();
        cats
    }

    /// Concatenates datasets in order under a new name.
    pub fn concat(name: impl Into<String>, parts: &[Dataset]) -> Self {
        let examples = parts.iter().flat_map(|d| d.examples.clone()).collect();
        Self::new(name, examples)
    }

    /// Loads a JSONL dataset: one record per line with fields `text`,
    /// `label` ("jailbreak"/"benign", case-insensitive) and optional
    /// `category`. Line order is preserved.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut examples = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: e.to_string(),
                })?;
            examples.push(raw_to_example(raw, path, line_no)?);
        }
        Ok(Dataset::new(file_stem(path), examples))
    }

    /// Loads a CSV dataset with header row `text,label,category`
    /// (`category` may be empty or the column absent).
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Io {
                    path: path.to_path_buf(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: 0,
                    msg: e.to_string(),
                },
            })?;
        let headers = reader
            .headers()
            .map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (text_col, label_col) = match (col("text"), col("label")) {
            (Some(t), Some(l)) => (t, l),
            _ => {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: "header must contain `text` and `label` columns".into(),
                })
            }
        };
        let category_col = col("category");

        let mut examples = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line_no = idx + 2; // 1-based, after the header
            let record = record.map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: line_no,
                msg: e.to_string(),
            })?;
            let field = |i: usize| record.get(i).unwrap_or("").to_string();
            let raw = RawRecord {
                text: field(text_col),
                label: field(label_col),
                category: category_col.map(&field).filter(|c| !c.is_empty()),
            };
            examples.push(raw_to_example(raw, path, line_no)?);
        }
        Ok(Dataset::new(file_stem(path), examples))
    }

    /// Dispatches on file extension: `.csv` goes through the CSV reader,
    /// everything else is treated as JSONL.
    pub fn load_path(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::load_csv(path),
            _ => Self::load_jsonl(path),
        }
    }

    /// Writes the dataset as JSONL, preserving example order.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for ex in &self.examples {
            let line = serde_json::to_string(ex).expect("example serialization cannot fail");
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Nested hold-out split: `test_fraction` of the full dataset goes to
    /// test, then `val_fraction` of the remainder to validation. Membership
    /// is deterministic given the seed; original example order is preserved
    /// within each part.
    pub fn split_holdout(&self, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
        spec.validate()?;
        if self.is_empty() {
            return Err(Error::EmptyDataset(self.name.clone()));
        }

        let strata = if spec.stratify {
            let groups = self.strata();
            for (key, idxs) in &groups {
                if idxs.len() < MIN_STRATUM {
                    return Err(Error::StratumTooSmall {
                        stratum: key.clone(),
                        size: idxs.len(),
                        min: MIN_STRATUM,
                    });
                }
            }
            groups.into_values().collect::<Vec<_>>()
        } else {
            vec![(0..self.len()).collect::<Vec<_>>()]
        };

        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(spec.seed);
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for mut idxs in strata {
            shuffle(&mut idxs, &mut rng);
            let n = idxs.len();
            let n_test = round_count(spec.test_fraction, n);
            let n_val = round_count(spec.val_fraction, n - n_test);
            test.extend_from_slice(&idxs[..n_test]);
            val.extend_from_slice(&idxs[n_test..n_test + n_val]);
            train.extend_from_slice(&idxs[n_test + n_val..]);
        }

        Ok((
            self.subset(&format!("{}-train", self.name), train),
            self.subset(&format!("{}-val", self.name), val),
            self.subset(&format!("{}-test", self.name), test),
        ))
    }

    /// Builds one dataset per jailbreak category: all benign examples plus
    /// exactly that category's jailbreaks, preserving original order.
    pub fn partition_by_category(&self) -> Result<BTreeMap<String, Dataset>> {
        let mut benign = Vec::new();
        let mut per_cat: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, ex) in self.examples.iter().enumerate() {
            match (ex.label(), ex.category()) {
                (Label::Benign, _) => benign.push(i),
                (Label::Jailbreak, Some(cat)) => per_cat.entry(cat.to_owned()).or_default().push(i),
                (Label::Jailbreak, None) => return Err(Error::MissingCategory),
            }
        }
        let mut out = BTreeMap::new();
        for (cat, jail_idxs) in per_cat {
            let mut idxs = merge_sorted(&benign, &jail_idxs);
            idxs.dedup();
            let ds = self.subset(&format!("{}[{}]", self.name, cat), idxs);
            out.insert(cat, ds);
        }
        Ok(out)
    }

    /// Label-stratified k-fold split. The k validation folds partition the
    /// dataset exactly; each pair is (train, val).
    pub fn kfold(&self, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
        let folds = kfold_indices(&self.labels(), k, seed)?;
        let mut out = Vec::with_capacity(k);
        for (f, val_idx) in folds.iter().enumerate() {
            let in_val: Vec<bool> = {
                let mut v = vec![false; self.len()];
                for &i in val_idx {
                    v[i] = true;
                }
                v
            };
            let train_idx: Vec<usize> = (0..self.len()).filter(|&i| !in_val[i]).collect();
            out.push((
                self.subset(&format!("{}-fold{}-train", self.name, f), train_idx),
                self.subset(&format!("{}-fold{}-val", self.name, f), val_idx.clone()),
            ));
        }
        Ok(out)
    }

    fn subset(&self, name: &str, mut idxs: Vec<usize>) -> Dataset {
        idxs.sort_unstable();
        Dataset::new(
            name,
            idxs.iter().map(|&i| self.examples[i].clone()).collect(),
        )
    }

    /// Groups example indices by (label, category) stratum key.
    fn strata(&self) -> BTreeMap<String, Vec<usize>> {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, ex) in self.examples.iter().enumerate() {
            let key = match ex.category() {
                Some(cat) => format!("{}/{}", ex.label(), cat),
                None => ex.label().to_string(),
            };
            groups.entry(key).or_default().push(i);
        }
        groups
    }
}

const MIN_STRATUM: usize = 5;

/// Configuration of the nested hold-out split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            val_fraction: 0.2,
            seed: 0,
            stratify: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (what, value) in [
            ("test_fraction", self.test_fraction),
            ("val_fraction", self.val_fraction),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::BadFraction {
                    what,
                    value,
                    range: "(0, 1)",
                });
            }
        }
        Ok(())
    }
}

/// Label-stratified validation-fold indices for k-fold CV. Each returned
/// vector holds the (sorted) row indices of one validation fold; the folds
/// partition `0..labels.len()` exactly. Deterministic given the seed.
pub fn kfold_indices(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n });
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [Label::Benign, Label::Jailbreak] {
        let mut idxs: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        shuffle(&mut idxs, &mut rng);
        for (pos, idx) in idxs.into_iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

fn raw_to_example(raw: RawRecord, path: &Path, line: usize) -> Result<LabeledExample> {
    let label = Label::parse(&raw.label).ok_or_else(|| Error::UnknownLabel {
        path: path.to_path_buf(),
        line,
        value: raw.label.clone(),
    })?;
    LabeledExample::new(raw.text, label, raw.category).map_err(|e| match e {
        Error::EmptyText | Error::CategoryOnBenign(_) => Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        },
        other => other,
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn round_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Fisher-Yates over an explicit ChaCha stream so shuffles stay stable
/// across dependency upgrades.
fn shuffle<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Merges two ascending index lists into one ascending list.
fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
