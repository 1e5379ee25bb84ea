//! Second-order gradient boosting with logistic loss and exact greedy
//! splits.
//!
//! Split gains use the standard second-order formulation with a fixed leaf
//! regularizer lambda = 1; leaf values are -G/(H+1). Determinism: rows are
//! put into a canonical content order before fitting, so predictions are
//! invariant to training-set row order, and split ties are broken by lowest
//! feature index then lowest threshold.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::featurize::FeatureVector;
use crate::learners::logistic::{check_training_set, sigmoid};

const LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum hessian sum allowed on each side of a split.
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_child_weight: 1.0,
        }
    }
}

/// Binary regression tree stored as an index arena; children always follow
/// their parent, so evaluation terminates by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Evaluates the tree on a sparse vector; absent coordinates read as 0.
    pub fn eval(&self, v: &FeatureVector) -> f64 {
        let mut idx = 0usize;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if v.get(feature) < threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Depth of the tree (0 for a single leaf).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreesModel {
    trees: Vec<Tree>,
    learning_rate: f64,
    /// Initial log-odds of the positive class prior.
    base_score: f64,
    max_depth: usize,
    dim: u32,
}

impl BoostedTreesModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn fit(x: &[FeatureVector], y: &[Label], params: &GbtParams) -> Result<Self> {
        let (dim, y01) = check_training_set(x, y)?;
        if params.num_trees == 0 {
            return Err(Error::OutOfRange {
                what: "num_trees",
                range: ">= 1",
                value: 0.0,
            });
        }
        if params.max_depth == 0 {
            return Err(Error::OutOfRange {
                what: "max_depth",
                range: ">= 1",
                value: 0.0,
            });
        }
        if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
            return Err(Error::OutOfRange {
                what: "learning_rate",
                range: "in (0, 1]",
                value: params.learning_rate,
            });
        }

        // Canonical content order: sorting rows by (features, label) makes
        // every downstream floating-point sum independent of input order.
        let mut perm: Vec<usize> = (0..x.len()).collect();
        perm.sort_by(|&a, &b| {
            compare_rows(&x[a], &x[b]).then_with(|| y01[a].total_cmp(&y01[b]))
        });
        let rows: Vec<&FeatureVector> = perm.iter().map(|&i| &x[i]).collect();
        let targets: Vec<f64> = perm.iter().map(|&i| y01[i]).collect();
        let n = rows.len();

        // Column store: per feature, (row, value) sorted by value.
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for (r, v) in rows.iter().enumerate() {
            for &(f, val) in v.entries() {
                columns[f as usize].push((r as u32, val));
            }
        }
        for col in &mut columns {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }

        let pos: f64 = targets.iter().sum();
        let base_score = (pos / (n as f64 - pos)).ln();
        let mut margins = vec![base_score; n];
        let mut trees = Vec::with_capacity(params.num_trees);
        let mut builder = TreeBuilder {
            columns: &columns,
            rows: &rows,
            grad: vec![0.0; n],
            hess: vec![0.0; n],
            in_node: vec![false; n],
            scratch: Vec::new(),
            max_depth: params.max_depth,
            min_child_weight: params.min_child_weight,
        };

        for _ in 0..params.num_trees {
            for i in 0..n {
                let p = sigmoid(margins[i]);
                builder.grad[i] = p - targets[i];
                builder.hess[i] = p * (1.0 - p);
            }
            let tree = builder.build();
            for (i, row) in rows.iter().enumerate() {
                margins[i] += params.learning_rate * tree.eval(row);
            }
            trees.push(tree);
        }

        Ok(Self {
            trees,
            learning_rate: params.learning_rate,
            base_score,
            max_depth: params.max_depth,
            dim: dim as u32,
        })
    }

    /// base_score + learning_rate * sum of tree outputs.
    pub fn raw_margin(&self, v: &FeatureVector) -> f64 {
        self.margin_with(v, self.trees.len())
    }

    /// Margin using only the first `n_trees` trees (loss-trajectory
    /// inspection).
    pub fn margin_with(&self, v: &FeatureVector, n_trees: usize) -> f64 {
        let partial: f64 = self.trees[..n_trees.min(self.trees.len())]
            .iter()
            .map(|t| t.eval(v))
            .sum();
        self.base_score + self.learning_rate * partial
    }

    pub fn predict_proba(&self, v: &FeatureVector) -> Result<f64> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim as usize,
                got: v.dim() as usize,
            });
        }
        Ok(sigmoid(self.raw_margin(v)))
    }
}

/// Lexicographic comparison of sparse rows by (index, value-bits).
fn compare_rows(a: &FeatureVector, b: &FeatureVector) -> std::cmp::Ordering {
    let (ea, eb) = (a.entries(), b.entries());
    for (x, y) in ea.iter().zip(eb.iter()) {
        let ord = x.0.cmp(&y.0).then_with(|| x.1.total_cmp(&y.1));
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    ea.len().cmp(&eb.len())
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<(u32, f64)>],
    rows: &'a [&'a FeatureVector],
    grad: Vec<f64>,
    hess: Vec<f64>,
    in_node: Vec<bool>,
    scratch: Vec<(f64, f64, f64)>,
    max_depth: usize,
    min_child_weight: f64,
}

struct BestSplit {
    gain: f64,
    feature: u32,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&mut self) -> Tree {
        let all: Vec<u32> = (0..self.rows.len() as u32).collect();
        let mut nodes = Vec::new();
        self.grow(&mut nodes, all, 0);
        Tree { nodes }
    }

    fn grow(&mut self, nodes: &mut Vec<Node>, rows: Vec<u32>, depth: usize) -> u32 {
        let g_total: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h_total: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();

        let split = if depth < self.max_depth && rows.len() >= 2 {
            self.best_split(&rows, g_total, h_total)
        } else {
            None
        };

        match split {
            None => {
                nodes.push(Node::Leaf {
                    value: -g_total / (h_total + LAMBDA),
                });
                (nodes.len() - 1) as u32
            }
            Some(best) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&r| self.rows[r as usize].get(best.feature) < best.threshold);
                let idx = nodes.len() as u32;
                nodes.push(Node::Leaf { value: 0.0 }); // placeholder
                let left = self.grow(nodes, left_rows, depth + 1);
                let right = self.grow(nodes, right_rows, depth + 1);
                nodes[idx as usize] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
                idx
            }
        }
    }

    /// Exact greedy split search over the observed thresholds of every
    /// feature. Feature values are non-negative, so the implicit-zero rows
    /// always form the leftmost value bucket.
    fn best_split(&mut self, rows: &[u32], g_total: f64, h_total: f64) -> Option<BestSplit> {
        for &r in rows {
            self.in_node[r as usize] = true;
        }
        let parent_score = g_total * g_total / (h_total + LAMBDA);
        let mut best: Option<BestSplit> = None;

        for (feature, column) in self.columns.iter().enumerate() {
            self.scratch.clear();
            for &(r, val) in column {
                if self.in_node[r as usize] {
                    self.scratch
                        .push((val, self.grad[r as usize], self.hess[r as usize]));
                }
            }
            if self.scratch.is_empty() {
                continue;
            }
            let (g_nz, h_nz) = self
                .scratch
                .iter()
                .fold((0.0, 0.0), |(g, h), &(_, gi, hi)| (g + gi, h + hi));
            let count_zero = rows.len() - self.scratch.len();

            let mut g_left = g_total - g_nz;
            let mut h_left = h_total - h_nz;
            let mut count_left = count_zero;
            let mut prev_val = 0.0f64;
            let mut i = 0;
            while i < self.scratch.len() {
                let val = self.scratch[i].0;
                // Boundary between the previous value group and this one.
                if count_left > 0 {
                    let g_right = g_total - g_left;
                    let h_right = h_total - h_left;
                    if h_left >= self.min_child_weight && h_right >= self.min_child_weight {
                        let gain = 0.5
                            * (g_left * g_left / (h_left + LAMBDA)
                                + g_right * g_right / (h_right + LAMBDA)
                                - parent_score);
                        if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                            best = Some(BestSplit {
                                gain,
                                feature: feature as u32,
                                threshold: (prev_val + val) / 2.0,
                            });
                        }
                    }
                }
                // Absorb the whole equal-value group.
                while i < self.scratch.len() && self.scratch[i].0 == val {
                    g_left += self.scratch[i].1;
                    h_left += self.scratch[i].2;
                    count_left += 1;
                    i += 1;
                }
                prev_val = val;
            }
        }

        for &r in rows {
            self.in_node[r as usize] = false;
        }
        best
    }
}
