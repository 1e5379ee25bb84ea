//! L2-regularized logistic regression fitted by full-batch gradient descent
//! with backtracking line search. Fully deterministic: no random
//! initialization, no sampling.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::featurize::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// L2 penalty on the weights; the bias is not regularized, so in the
    /// large-l2 limit predictions collapse to the class prior.
    pub l2: f64,
    pub max_iters: usize,
    /// Stop when the gradient infinity-norm falls below this.
    pub tol: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    bias: f64,
    l2: f64,
}

impl LogisticModel {
    pub fn new(weights: Vec<f64>, bias: f64, l2: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite("logistic weights"));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::OutOfRange {
                what: "l2",
                range: "finite and >= 0",
                value: l2,
            });
        }
        Ok(Self { weights, bias, l2 })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Minimizes mean logistic loss + (l2/2)||w||^2 from the zero
    /// initialization by full-batch proximal gradient descent with
    /// backtracking line search: the data term is stepped along its
    /// gradient and the quadratic penalty is applied in closed form
    /// (shrinkage), which stays stable for arbitrarily large l2. Stops when
    /// the full objective's gradient infinity-norm drops below `tol` or at
    /// the iteration cap. Deterministic.
    pub fn fit(x: &[FeatureVector], y: &[Label], params: &LrParams) -> Result<Self> {
        let (dim, y01) = check_training_set(x, y)?;
        if !(params.l2 >= 0.0 && params.l2.is_finite()) {
            return Err(Error::OutOfRange {
                what: "l2",
                range: "finite and >= 0",
                value: params.l2,
            });
        }

        let data_loss = |w: &[f64], b: f64| loss(w, b, x, &y01, 0.0);

        let mut weights = vec![0.0; dim];
        let mut bias = 0.0;
        let mut current = data_loss(&weights, bias);
        let mut step = 1.0f64;

        for _ in 0..params.max_iters {
            // Gradient of the data term only; the penalty is handled by the
            // proximal shrinkage below.
            let (gw, gb) = gradient(&weights, bias, x, &y01, 0.0);

            // Full-objective gradient for the stopping test.
            let gnorm = gw
                .iter()
                .zip(&weights)
                .map(|(g, w)| (g + params.l2 * w).abs())
                .fold(gb.abs(), f64::max);
            if gnorm < params.tol {
                break;
            }

            // Backtracking on the smooth part: accept once the candidate is
            // majorized by the quadratic model at the current point.
            let mut t = (step * 2.0).min(1e6);
            let mut advanced = false;
            while t > 1e-14 {
                let shrink = 1.0 + t * params.l2;
                let cand_w: Vec<f64> = weights
                    .iter()
                    .zip(&gw)
                    .map(|(w, g)| (w - t * g) / shrink)
                    .collect();
                let cand_b = bias - t * gb;
                let cand_loss = data_loss(&cand_w, cand_b);
                let mut linear = 0.0;
                let mut sq = 0.0;
                for ((cw, w), g) in cand_w.iter().zip(&weights).zip(&gw) {
                    let d = cw - w;
                    linear += g * d;
                    sq += d * d;
                }
                let db = cand_b - bias;
                linear += gb * db;
                sq += db * db;
                if cand_loss <= current + linear + sq / (2.0 * t) + 1e-15 {
                    weights = cand_w;
                    bias = cand_b;
                    current = cand_loss;
                    step = t;
                    advanced = true;
                    break;
                }
                t *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        Self::new(weights, bias, params.l2)
    }

    /// sigmoid(w . v + b)
    pub fn predict_proba(&self, v: &FeatureVector) -> Result<f64> {
        if v.dim() as usize != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: v.dim() as usize,
            });
        }
        Ok(sigmoid(v.dot_dense(&self.weights) + self.bias))
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable per-sample logistic loss: ln(1 + e^z) - y z.
fn sample_loss(z: f64, y: f64) -> f64 {
    if z > 0.0 {
        z * (1.0 - y) + (-z).exp().ln_1p()
    } else {
        -y * z + z.exp().ln_1p()
    }
}

/// Mean logistic loss plus (l2/2)||w||^2; the bias is unpenalized.
pub fn loss(weights: &[f64], bias: f64, x: &[FeatureVector], y01: &[f64], l2: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y01)
        .map(|(v, &y)| sample_loss(v.dot_dense(weights) + bias, y))
        .sum();
    let penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    data / n + penalty
}

/// Analytic gradient of [`loss`]: ((1/n) X^T (sigma(z) - y) + l2 w, mean residual).
pub fn gradient(
    weights: &[f64],
    bias: f64,
    x: &[FeatureVector],
    y01: &[f64],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (v, &y) in x.iter().zip(y01) {
        let r = sigmoid(v.dot_dense(weights) + bias) - y;
        for &(i, val) in v.entries() {
            gw[i as usize] += r * val;
        }
        gb += r;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Shared fit-input validation: consistent dimensions, both classes present.
pub(crate) fn check_training_set(x: &[FeatureVector], y: &[Label]) -> Result<(usize, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    let dim = x[0].dim() as usize;
    for v in x {
        if v.dim() as usize != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim() as usize,
            });
        }
    }
    let y01: Vec<f64> = y.iter().map(|l| f64::from(u8::from(l.is_jailbreak()))).collect();
    let pos: f64 = y01.iter().sum();
    if pos == 0.0 {
        return Err(Error::MissingClass("jailbreak"));
    }
    if pos == y01.len() as f64 {
        return Err(Error::MissingClass("benign"));
    }
    Ok((dim, y01))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::{RngCore, SeedableRng};

    fn vec1(space: u64, dim: u32, entries: Vec<(u32, f64)>) -> FeatureVector {
        FeatureVector::new(space, dim, entries).unwrap()
    }

    #[test]
    fn separable_toy_converges() {
        let x = vec![vec1(0, 1, vec![(0, 1.0)]), vec1(0, 1, vec![])];
        let y = vec![Label::Jailbreak, Label::Benign];
        let model = LogisticModel::fit(&x, &y, &LrParams::default()).unwrap();
        assert!(model.predict_proba(&x[0]).unwrap() > 0.5);
        assert!(model.predict_proba(&x[1]).unwrap() < 0.5);
    }

    #[test]
    fn huge_l2_collapses_to_prior() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            x.push(vec1(0, 2, vec![(i % 2, 1.0 + i as f64)]));
            y.push(if i < 3 { Label::Jailbreak } else { Label::Benign });
        }
        let params = LrParams {
            l2: 1e6,
            max_iters: 2000,
            tol: 1e-10,
        };
        let model = LogisticModel::fit(&x, &y, &params).unwrap();
        assert!(model.weights().iter().all(|w| w.abs() < 1e-3));
        let p = model.predict_proba(&vec1(0, 2, vec![(0, 1.0)])).unwrap();
        assert!((p - 0.3).abs() < 0.02, "prediction {p} should be near the 0.3 prior");
    }

    #[test]
    fn zero_model_outputs_half_and_sigmoid_identity() {
        let model = LogisticModel::new(vec![0.0, 0.0], 0.0, 0.0).unwrap();
        let v = vec1(0, 2, vec![(0, 3.0)]);
        assert_eq!(model.predict_proba(&v).unwrap(), 0.5);
        // w.v + b = ln 3 -> probability 0.75.
        let model = LogisticModel::new(vec![3f64.ln()], 0.0, 0.0).unwrap();
        let v = vec1(0, 1, vec![(0, 1.0)]);
        assert!((model.predict_proba(&v).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let model = LogisticModel::new(vec![0.0], 0.0, 0.0).unwrap();
        let v = vec1(0, 2, vec![(1, 1.0)]);
        assert!(matches!(
            model.predict_proba(&v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fit_rejects_single_class() {
        let x = vec![vec1(0, 1, vec![(0, 1.0)]), vec1(0, 1, vec![])];
        let y = vec![Label::Benign, Label::Benign];
        assert!(matches!(
            LogisticModel::fit(&x, &y, &LrParams::default()),
            Err(Error::MissingClass("jailbreak"))
        ));
    }

    #[test]
    fn final_loss_never_exceeds_zero_init() {
        let x = vec![
            vec1(0, 2, vec![(0, 2.0)]),
            vec1(0, 2, vec![(1, 1.0)]),
            vec1(0, 2, vec![(0, 1.0), (1, 1.0)]),
            vec1(0, 2, vec![]),
        ];
        let y = vec![Label::Jailbreak, Label::Benign, Label::Jailbreak, Label::Benign];
        for l2 in [0.0, 0.1, 10.0] {
            let params = LrParams {
                l2,
                ..Default::default()
            };
            let model = LogisticModel::fit(&x, &y, &params).unwrap();
            let y01: Vec<f64> = y.iter().map(|l| f64::from(u8::from(l.is_jailbreak()))).collect();
            let zero = loss(&[0.0, 0.0], 0.0, &x, &y01, l2);
            let fitted = loss(model.weights(), model.bias(), &x, &y01, l2);
            assert!(fitted <= zero + 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let unit = |r: &mut rand_chacha::ChaCha20Rng| (r.next_u64() as f64) / (u64::MAX as f64);
        let dim = 5u32;
        for _ in 0..20 {
            // Random sparse dataset with both classes.
            let n = 4 + (rng.next_u64() % 5) as usize;
            let mut x = Vec::new();
            let mut y01 = Vec::new();
            for i in 0..n {
                let mut entries = Vec::new();
                for f in 0..dim {
                    if rng.next_u64() % 2 == 0 {
                        entries.push((f, 1.0 + 3.0 * unit(&mut rng)));
                    }
                }
                x.push(vec1(0, dim, entries));
                y01.push(f64::from(u8::from(i % 2 == 0)));
            }
            let weights: Vec<f64> = (0..dim).map(|_| 2.0 * unit(&mut rng) - 1.0).collect();
            let bias = 2.0 * unit(&mut rng) - 1.0;
            let l2 = unit(&mut rng);

            let (gw, gb) = gradient(&weights, bias, &x, &y01, l2);
            let eps = 1e-6;
            let check = |analytic: f64, numeric: f64| {
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-5,
                    "{analytic} vs {numeric}"
                );
            };
            for d in 0..dim as usize {
                let mut wp = weights.clone();
                let mut wm = weights.clone();
                wp[d] += eps;
                wm[d] -= eps;
                let numeric =
                    (loss(&wp, bias, &x, &y01, l2) - loss(&wm, bias, &x, &y01, l2)) / (2.0 * eps);
                check(gw[d], numeric);
            }
            let numeric = (loss(&weights, bias + eps, &x, &y01, l2)
                - loss(&weights, bias - eps, &x, &y01, l2))
                / (2.0 * eps);
            check(gb, numeric);
        }
    }
}
