//! Metrics against brute-force oracles, plus their order properties.

mod common;

use cbx::eval::{
    average_precision, mean_average_precision, pareto_front, recall_at_fpr, threshold_at_fpr,
};
use cbx::nn::Matrix;
use common::oracles;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn threshold_and_recall_match_exhaustive_sweeps() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let scores = oracles::random_scores(&mut rng, n);
        let mut labels = oracles::random_labels(&mut rng, n);
        labels[0] = false;
        labels[1] = true;
        let target = [0.0, 0.05, 0.1, 0.3, 1.0][rng.random_range(0..5)];
        let t = threshold_at_fpr(&scores, &labels, target).unwrap();
        assert_eq!(t, oracles::threshold(&scores, &labels, target), "{scores:?} {labels:?} {target}");
        let r = recall_at_fpr(&scores, &labels, t).unwrap();
        let (fpr, recall) = oracles::fpr_and_recall(&scores, &labels, t);
        assert_eq!((r.recall, r.realized_fpr), (recall, fpr));
        assert!(r.realized_fpr <= target);
    }
}

#[test]
fn average_precision_matches_rank_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let scores = oracles::random_scores(&mut rng, n);
        let labels = oracles::random_labels(&mut rng, n);
        assert_eq!(average_precision(&scores, &labels).unwrap(), oracles::average_precision(&scores, &labels));
    }
}

#[test]
fn mean_average_precision_matches_column_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..600 {
        let (n, k) = (rng.random_range(1..=50), rng.random_range(1..=8));
        let mut scores = Matrix::zeros(n, k);
        let mut labels = Matrix::zeros(n, k);
        let mut expected = Vec::new();
        for c in 0..k {
            let s = oracles::random_scores(&mut rng, n);
            let l = if rng.random_bool(0.2) { vec![false; n] } else { oracles::random_labels(&mut rng, n) };
            for i in 0..n {
                scores[(i, c)] = s[i];
                labels[(i, c)] = f64::from(u8::from(l[i]));
            }
            expected.push(oracles::average_precision(&s, &l));
        }
        let included: Vec<f64> = expected.iter().flatten().copied().collect();
        match mean_average_precision(&scores, &labels) {
            Ok(m) => {
                assert_eq!(m.per_concept, expected);
                assert_eq!(m.excluded, k - included.len());
                assert_eq!(m.map, included.iter().sum::<f64>() / included.len() as f64);
                let lo = included.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = included.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo - 1e-15 <= m.map && m.map <= hi + 1e-15);
            }
            Err(_) => assert!(included.is_empty()),
        }
    }
}

#[test]
fn pareto_front_matches_pairwise_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..1000 {
        let n = rng.random_range(0..=200);
        let grid = rng.random_range(3..30);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (f64::from(rng.random_range(0..grid)), f64::from(rng.random_range(0..grid))))
            .collect();
        assert_eq!(pareto_front(&points), oracles::pareto(&points));
    }
}

proptest! {
    #[test]
    fn raising_the_threshold_never_raises_fpr_or_recall(
        scores in prop::collection::vec(0.0f64..1.0, 2..50),
        seed in any::<u64>(),
        t1 in 0.0f64..1.0,
        dt in 0.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = oracles::random_labels(&mut rng, scores.len());
        labels[0] = true;
        labels[1] = false;
        let low = recall_at_fpr(&scores, &labels, t1).unwrap();
        let high = recall_at_fpr(&scores, &labels, t1 + dt).unwrap();
        prop_assert!(high.recall <= low.recall);
        prop_assert!(high.realized_fpr <= low.realized_fpr);
    }

    #[test]
    fn average_precision_ignores_monotone_rescaling(
        scores in prop::collection::vec(-5.0f64..5.0, 1..50),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = oracles::random_labels(&mut rng, scores.len());
        let base = average_precision(&scores, &labels).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert_eq!(average_precision(&shifted, &labels).unwrap(), base);
        prop_assert_eq!(average_precision(&squashed, &labels).unwrap(), base);
    }
}

#[test]
fn metric_edge_cases() {
    assert!(threshold_at_fpr(&[0.3, 0.4], &[true, true], 0.1).is_err());
    assert!(recall_at_fpr(&[0.3, 0.4], &[false, false], 0.5).is_err());
    assert_eq!(threshold_at_fpr(&[0.9, 0.1], &[false, true], 0.0).unwrap(), f64::INFINITY);
    assert!(average_precision(&[0.5], &[false]).unwrap().is_none());
    assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), Some(0.5));
}
