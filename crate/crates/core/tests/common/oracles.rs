//! Brute-force reference implementations of the ranking metrics.

use rand::Rng;

pub fn fpr_and_recall(scores: &[f64], labels: &[bool], t: f64) -> (f64, f64) {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    let flagged = |want: bool| {
        scores
            .iter()
            .zip(labels)
            .filter(|&(&s, &l)| l == want && s >= t)
            .count()
    };
    let fpr = if neg == 0 { 0.0 } else { flagged(false) as f64 / neg as f64 };
    let recall = if pos == 0 { 0.0 } else { flagged(true) as f64 / pos as f64 };
    (fpr, recall)
}

/// Tries every distinct score and `+∞`; keeps the highest recall within the budget, and
/// among those the lowest threshold.
pub fn threshold(scores: &[f64], labels: &[bool], target: f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let candidates = scores.iter().copied().chain([f64::INFINITY]);
    for t in candidates {
        let (fpr, recall) = fpr_and_recall(scores, labels, t);
        if fpr <= target && (recall > best.0 || (recall == best.0 && t < best.1)) {
            best = (recall, t);
        }
    }
    best.1
}

/// Precision at each positive's rank, where rank counts higher scores plus equal scores
/// earlier in the input.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let rank = |i: usize| {
        1 + (0..scores.len())
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let mut ranks: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).map(rank).collect();
    if ranks.is_empty() {
        return None;
    }
    ranks.sort_unstable();
    let mut sum = 0.0;
    for (hits, &r) in ranks.iter().enumerate() {
        sum += (hits + 1) as f64 / r as f64;
    }
    Some(sum / ranks.len() as f64)
}

pub fn pareto(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(a, b)| {
            !points
                .iter()
                .any(|&(c, d)| c >= a && d >= b && (c > a || d > b))
        })
        .collect()
}

/// Scores on a coarse grid so ties are common.
pub fn random_scores(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let levels = rng.random_range(2..=20);
    (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect()
}

pub fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    let p = rng.random_range(0.1..0.9);
    (0..n).map(|_| rng.random_bool(p)).collect()
}
