//! Property tests for the pipeline's structural invariants.

use proptest::prelude::*;

use moje_core::corpus::{kfold_indices, Dataset, Label, LabeledExample, SplitSpec};
use moje_core::featurize::{FeaturePipeline, FeatureVector, NGramConfig, NGramOrders, Tokenizer};
use moje_core::learners::LogisticModel;
use moje_core::metrics::{auc, f_beta};
use moje_core::moje::{combine_posteriors, CombineRule};
use moje_core::select::{mutual_information, select_top_fraction, table_mi};

fn probs_and_tau() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (
        prop::collection::vec(0.0f64..=1.0, 1..8),
        0.01f64..0.99f64,
    )
}

proptest! {
    // Label equivalence: the avg branch can never reach tau, because an
    // average of values all below tau stays below tau.
    #[test]
    fn combine_label_equivalent_to_max_test((probs, tau) in probs_and_tau()) {
        let (score, rule) = combine_posteriors(&probs, tau);
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(score >= tau, max >= tau);
        prop_assert_eq!(rule == CombineRule::Max, max >= tau);
        prop_assert!(score >= min && score <= max);
    }

    // Raising any single expert's probability never lowers the final score.
    #[test]
    fn combine_monotone_in_every_coordinate(
        (probs, tau) in probs_and_tau(),
        idx in 0usize..8,
        bump in 0.0f64..1.0,
    ) {
        let idx = idx % probs.len();
        let (before, _) = combine_posteriors(&probs, tau);
        let mut raised = probs.clone();
        raised[idx] = (raised[idx] + bump).min(1.0);
        let (after, _) = combine_posteriors(&raised, tau);
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn f_beta_monotone_in_precision_and_recall(
        p in 0.0f64..=1.0,
        r in 0.0f64..=1.0,
        dp in 0.0f64..0.5,
        dr in 0.0f64..0.5,
        beta in 0.1f64..3.0,
    ) {
        let base = f_beta(p, r, beta).unwrap();
        let more_p = f_beta((p + dp).min(1.0), r, beta).unwrap();
        let more_r = f_beta(p, (r + dr).min(1.0), beta).unwrap();
        prop_assert!(more_p >= base - 1e-12);
        prop_assert!(more_r >= base - 1e-12);
        let diag = f_beta(p, p, beta).unwrap();
        prop_assert!((diag - p).abs() < 1e-12);
    }

    // AUC is a rank statistic: any strictly monotone transform of the
    // scores leaves it unchanged.
    #[test]
    fn auc_invariant_under_monotone_transform(
        scores in prop::collection::vec(0.0f64..=1.0, 2..40),
        flags in prop::collection::vec(any::<bool>(), 2..40),
    ) {
        let n = scores.len().min(flags.len());
        if n < 2 {
            return Ok(());
        }
        let scores = &scores[..n];
        let mut labels: Vec<Label> = flags[..n]
            .iter()
            .map(|&f| if f { Label::Jailbreak } else { Label::Benign })
            .collect();
        // Force both classes.
        labels[0] = Label::Jailbreak;
        labels[n - 1] = Label::Benign;
        let base = auc(scores, &labels).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| 3.0 * s * s * s + 1.0).collect();
        let moved = auc(&transformed, &labels).unwrap();
        prop_assert_eq!(base, moved);
    }

    // MI is symmetric in its two variables (transposing the table) and
    // bounded by the marginal entropies.
    #[test]
    fn table_mi_symmetric_and_bounded(pp in 0u64..30, pn in 0u64..30, ap in 0u64..30, an in 0u64..30) {
        let mi = table_mi(pp, pn, ap, an);
        let transposed = table_mi(pp, ap, pn, an);
        prop_assert!((mi - transposed).abs() < 1e-12);
        let n = (pp + pn + ap + an) as f64;
        if n > 0.0 {
            let h = |a: u64, b: u64| {
                let (pa, pb) = (a as f64 / n, b as f64 / n);
                let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
                term(pa) + term(pb)
            };
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= h(pp + pn, ap + an).min(h(pp + ap, pn + an)) + 1e-12);
        }
    }

    // The k validation folds partition the dataset exactly.
    #[test]
    fn kfold_folds_partition_rows(
        flags in prop::collection::vec(any::<bool>(), 6..60),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        let labels: Vec<Label> = flags
            .iter()
            .map(|&f| if f { Label::Jailbreak } else { Label::Benign })
            .collect();
        if k > labels.len() {
            return Ok(());
        }
        let folds = kfold_indices(&labels, k, seed).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for fold in &folds {
            for &i in fold {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    // Nested containment of top-fraction masks.
    #[test]
    fn selection_masks_nest(scores in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let xs: Vec<FeatureVector> = (0..4)
            .map(|i| {
                let entries: Vec<(u32, f64)> = scores
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| (i + j) % 2 == 0)
                    .map(|(j, _)| (j as u32, 1.0))
                    .collect();
                FeatureVector::new(0, scores.len() as u32, entries).unwrap()
            })
            .collect();
        let ys = vec![Label::Jailbreak, Label::Benign, Label::Jailbreak, Label::Benign];
        let ranking = mutual_information(&xs, &ys).unwrap();
        let small = select_top_fraction(&ranking, 0.3).unwrap();
        let large = select_top_fraction(&ranking, 0.8).unwrap();
        prop_assert!(small.kept().iter().all(|i| large.kept().contains(i)));
    }

    // Increasing the count of a positive-weight feature never decreases
    // the predicted probability.
    #[test]
    fn lr_prediction_monotone_in_positive_weight_feature(
        weights in prop::collection::vec(-2.0f64..2.0, 1..10),
        bias in -1.0f64..1.0,
        counts in prop::collection::vec(0u32..4, 1..10),
    ) {
        let dim = weights.len().min(counts.len());
        let weights = &weights[..dim];
        let Some(target) = weights.iter().position(|&w| w > 0.0) else {
            return Ok(());
        };
        let model = LogisticModel::new(weights.to_vec(), bias, 0.0).unwrap();
        let entries = |extra: u32| -> Vec<(u32, f64)> {
            counts[..dim]
                .iter()
                .enumerate()
                .map(|(i, &c)| (i as u32, f64::from(c) + f64::from(u32::from(i == target) * extra)))
                .filter(|&(_, v)| v > 0.0)
                .collect()
        };
        let base = model
            .predict_proba(&FeatureVector::new(0, dim as u32, entries(0)).unwrap())
            .unwrap();
        let bumped = model
            .predict_proba(&FeatureVector::new(0, dim as u32, entries(2)).unwrap())
            .unwrap();
        prop_assert!(bumped >= base);
    }
}

// Count-vector mass equals the number of in-vocabulary n-gram occurrences;
// TF-IDF vectors are unit length.
proptest! {
    #[test]
    fn transform_mass_and_norm(words in prop::collection::vec(0usize..6, 1..12)) {
        let vocab_words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
        let text: String = words
            .iter()
            .map(|&i| vocab_words[i])
            .collect::<Vec<_>>()
            .join(" ");
        let corpus = Dataset::new(
            "p",
            vec![
                LabeledExample::new(text.clone(), Label::Benign, None).unwrap(),
                LabeledExample::new("alpha beta gamma delta epsilon zeta", Label::Benign, None)
                    .unwrap(),
            ],
        );
        let tok = Tokenizer::Word { lowercase: true };
        for orders in [NGramOrders::Uni, NGramOrders::Bi, NGramOrders::UniBi] {
            let counts =
                FeaturePipeline::fit(tok.clone(), NGramConfig::counts(orders), &corpus).unwrap();
            let v = counts.transform(&text).unwrap();
            let n = words.len();
            let expected = match orders {
                NGramOrders::Uni => n,
                NGramOrders::Bi => n.saturating_sub(1),
                NGramOrders::UniBi => n + n.saturating_sub(1),
            };
            prop_assert!((v.sum() - expected as f64).abs() < 1e-9);

            let tfidf =
                FeaturePipeline::fit(tok.clone(), NGramConfig::tfidf(orders), &corpus).unwrap();
            let v = tfidf.transform(&text).unwrap();
            if !v.is_zero() {
                prop_assert!((v.l2_norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    // Identical inputs give identical splits, fold for fold.
    #[test]
    fn holdout_split_deterministic(seed in any::<u64>(), n_benign in 10usize..40, n_jail in 10usize..40) {
        let mut examples = Vec::new();
        for i in 0..n_benign {
            examples.push(LabeledExample::new(format!("b{i}"), Label::Benign, None).unwrap());
        }
        for i in 0..n_jail {
            examples.push(
                LabeledExample::new(format!("j{i}"), Label::Jailbreak, Some("c".into())).unwrap(),
            );
        }
        let ds = Dataset::new("d", examples);
        let spec = SplitSpec { seed, ..Default::default() };
        let a = ds.split_holdout(&spec).unwrap();
        let b = ds.split_holdout(&spec).unwrap();
        prop_assert_eq!(a.0.examples(), b.0.examples());
        prop_assert_eq!(a.1.examples(), b.1.examples());
        prop_assert_eq!(a.2.examples(), b.2.examples());
        // The three parts cover the dataset exactly.
        prop_assert_eq!(a.0.len() + a.1.len() + a.2.len(), ds.len());
    }

    // |partition[cat]| = |benign| + |jailbreak_cat| for every category.
    #[test]
    fn partition_sizes_by_brute_force(
        cats in prop::collection::vec(0u8..4, 1..30),
        n_benign in 1usize..20,
    ) {
        let mut examples = Vec::new();
        for i in 0..n_benign {
            examples.push(LabeledExample::new(format!("b{i}"), Label::Benign, None).unwrap());
        }
        for (i, c) in cats.iter().enumerate() {
            examples.push(
                LabeledExample::new(format!("j{i}"), Label::Jailbreak, Some(format!("c{c}")))
                    .unwrap(),
            );
        }
        let ds = Dataset::new("d", examples);
        let parts = ds.partition_by_category().unwrap();
        for (cat, part) in &parts {
            let expected = n_benign
                + cats
                    .iter()
                    .filter(|&&c| &format!("c{c}") == cat)
                    .count();
            prop_assert_eq!(part.len(), expected);
        }
    }
}
