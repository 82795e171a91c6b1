use std::collections::{BTreeMap, BTreeSet};

use attriweight::attribution::{
    group_contributions, precompute_training_side, tracin_score, weighted_score, AttributionResult, Kernel,
};
use attriweight::dataset::{generate_gaussian_classes, make_splits, CorruptionRecord};
use attriweight::eval::{lds_from_scores, mislabel_auc, recall_at_k, spearman, LdsGroundTruth};
use attriweight::features::GradientFeatureStore;
use attriweight::model::ParameterGrouping;
use attriweight::oracle::{group_names, optimal_weights, snr};
use attriweight::rng::SplitMix64;
use attriweight::weighting::WeightVector;
use proptest::prelude::*;

fn ranks_pairwise(a: &[f64], b: &[f64]) -> f64 {
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let (x, y) = (a[i] - a[j], b[i] - b[j]);
            num += x * y;
            da += x * x;
            db += y * y;
        }
    }
    num / (da * db).sqrt()
}

fn shuffled(n: usize, seed: u64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=n).map(|x| x as f64).collect();
    SplitMix64::new(seed).shuffle(&mut v);
    v
}

/// Strictly increasing maps used to check rank invariance.
fn transforms() -> Vec<Box<dyn Fn(f64) -> f64>> {
    let mut t: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|x| x),
        Box::new(|x| 3.0 * x + 1.0),
        Box::new(|x| x.powi(3)),
        Box::new(|x| x.exp()),
        Box::new(|x| x.atan()),
        Box::new(|x| x.tanh()),
        Box::new(|x| x + x.powi(3)),
        Box::new(|x| (x / 4.0).exp() - 7.0),
        Box::new(|x| x.signum() * x.abs().sqrt()),
        Box::new(|x| x.signum() * x.abs().ln_1p()),
        Box::new(|x| 1.0 / (1.0 + (-x).exp())),
        Box::new(|x| x.sinh()),
        Box::new(|x| 0.001 * x),
        Box::new(|x| 1e3 * x - 5.0),
        Box::new(|x| x.cbrt()),
    ];
    for s in 1..=5 {
        let s = s as f64;
        t.push(Box::new(move |x| s * x + x.atan()));
    }
    t
}

fn grid_truth(n_train: usize, n_subsets: usize, outputs: Vec<f64>, seed: u64) -> LdsGroundTruth {
    let mut rng = SplitMix64::new(seed);
    let subsets = (0..n_subsets)
        .map(|_| {
            let mut s: Vec<u64> = rng.sample_indices(n_train, n_train / 2).into_iter().map(|i| i as u64).collect();
            s.sort_unstable();
            s
        })
        .collect();
    LdsGroundTruth {
        train_ids: (0..n_train as u64).collect(),
        subsets,
        query_ids: vec!["q".into()],
        outputs: vec![outputs],
        alpha: 0.5,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spearman_matches_pairwise_form(n in 2usize..40, sa in any::<u64>(), sb in any::<u64>()) {
        let (a, b) = (shuffled(n, sa), shuffled(n, sb));
        prop_assert_eq!(spearman(&a, &b).unwrap(), ranks_pairwise(&a, &b));
    }

    #[test]
    fn auc_matches_pairwise_count(
        scores in prop::collection::vec(0u8..6, 2..120),
        flags in prop::collection::vec(any::<bool>(), 120),
    ) {
        let n = scores.len();
        let mut positive = flags[..n].to_vec();
        positive[0] = true;
        positive[n - 1] = false;
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let ids: Vec<u64> = (0..n as u64).collect();
        let (mut half, mut np, mut nn) = (0u64, 0u64, 0u64);
        for i in 0..n {
            if positive[i] { np += 1 } else { nn += 1 }
            for j in 0..n {
                if positive[i] && !positive[j] {
                    half += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
                }
            }
        }
        let corrupted: BTreeSet<u64> = ids.iter().copied().filter(|&i| positive[i as usize]).collect();
        let record = CorruptionRecord {
            original_labels: corrupted.iter().map(|&i| (i, 0)).collect::<BTreeMap<_, _>>(),
            corruption_fraction: corrupted.len() as f64 / n as f64,
            corrupted_ids: corrupted,
        };
        let expected = (half as f64 / 2.0) / (np as f64 * nn as f64);
        prop_assert_eq!(mislabel_auc(&s, &ids, &record).unwrap(), expected);
    }

    #[test]
    fn lds_ignores_monotone_output_transforms(seed in any::<u64>(), n in 8usize..40) {
        let mut rng = SplitMix64::new(seed);
        let outputs: Vec<f64> = (0..12).map(|_| rng.next_gaussian()).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let base = lds_from_scores(&grid_truth(n, 12, outputs.clone(), seed), &[scores.clone()]).unwrap().mean;
        for f in transforms() {
            let gt = grid_truth(n, 12, outputs.iter().map(|&x| f(x)).collect(), seed);
            prop_assert_eq!(lds_from_scores(&gt, &[scores.clone()]).unwrap().mean, base);
        }
        let scaled: Vec<f64> = scores.iter().map(|s| 4.0 * s).collect();
        let gt = grid_truth(n, 12, outputs, seed);
        prop_assert!((lds_from_scores(&gt, &[scaled]).unwrap().mean - base).abs() < 1e-12);
    }

    #[test]
    fn recall_survives_positive_rescaling(seed in any::<u64>(), n in 10usize..80, k in 1usize..10, c in 0.01f64..100.0) {
        let mut rng = SplitMix64::new(seed);
        let ids: Vec<u64> = (0..n as u64).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let truth: BTreeSet<u64> = rng.sample_indices(n, n / 3).into_iter().map(|i| i as u64).collect();
        let a = AttributionResult::new("q", ids.clone(), scores.clone(), "t").unwrap();
        let b = AttributionResult::new("q", ids, scores.iter().map(|s| c * s).collect(), "t").unwrap();
        prop_assert_eq!(recall_at_k(&a, &truth, k).unwrap(), recall_at_k(&b, &truth, k).unwrap());
    }

    #[test]
    fn optimal_weights_maximize_snr(
        params in prop::collection::vec((0.0f64..3.0, 0.05f64..3.0), 1..8),
        seed in any::<u64>(),
    ) {
        let (mut alphas, sigmas): (Vec<f64>, Vec<f64>) = params.into_iter().unzip();
        alphas[0] += 0.1;
        let best = snr(&optimal_weights(&alphas, &sigmas).unwrap(), &alphas, &sigmas).unwrap();
        let mut rng = SplitMix64::new(seed);
        for _ in 0..50 {
            let w = WeightVector::from_values(rng.simplex_point(alphas.len()), group_names(alphas.len())).unwrap();
            prop_assert!(snr(&w, &alphas, &sigmas).unwrap() <= best + 1e-9);
        }
    }

    #[test]
    fn group_contributions_sum_to_tracin(
        sizes in prop::collection::vec(1usize..6, 1..5),
        n in 1usize..20,
        seed in any::<u64>(),
    ) {
        let layout = ParameterGrouping::new(
            sizes.iter().enumerate().map(|(j, &d)| (format!("g{j}"), d)).collect(),
        ).unwrap();
        let d = layout.total_dim();
        let mut rng = SplitMix64::new(seed);
        let data: Vec<f64> = (0..n * d).map(|_| rng.next_gaussian()).collect();
        let store = GradientFeatureStore::new((0..n as u64).collect(), layout.clone(), data).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let side = precompute_training_side(&store, &Kernel::Identity).unwrap();
        let c = group_contributions(&q, &side, &layout).unwrap();
        let direct = tracin_score(&q, &store).unwrap();
        for (total, s) in c.total_scores().iter().zip(&direct.scores) {
            prop_assert!((total - s).abs() <= 1e-10 * (1.0 + s.abs()));
        }
        let uniform = WeightVector::uniform(layout.names());
        let m = layout.len() as f64;
        for (w, s) in weighted_score(&c, &uniform).unwrap().scores.iter().zip(&direct.scores) {
            prop_assert!((w * m - s).abs() <= 1e-10 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn splits_are_disjoint(a in 0usize..50, b in 0usize..50, c in 0usize..50, seed in any::<u64>()) {
        let ds = generate_gaussian_classes(3, 50, 4, 1.0, 5).unwrap();
        let split = make_splits(&ds, a, b, c, seed).unwrap();
        let all: BTreeSet<u64> = split.train_ids.iter().chain(&split.weight_learning_ids).chain(&split.eval_ids).copied().collect();
        prop_assert_eq!(all.len(), a + b + c);
        prop_assert_eq!((split.train_ids.len(), split.weight_learning_ids.len(), split.eval_ids.len()), (a, b, c));
    }
}
