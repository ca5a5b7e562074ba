//! Decision and explanation metrics, and Pareto-front selection.
//!
//! The fraud score of a row is the decision head's probability for class 1. A row is
//! flagged when `score >= threshold`.

use crate::dataset::{Dataset, Split, TransactionRecord};
use crate::model::ConceptBottleneckModel;
use crate::nn::Matrix;
use crate::training::{ConceptSource, TrainingSet};
use crate::weak_labels::{jaccard, ConceptVector};
use crate::{Error, Result};

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    Ok(())
}

/// Smallest threshold whose false-positive rate stays within `fpr_target`. Candidates
/// are the distinct scores and `+∞` (flag nothing).
pub fn threshold_at_fpr(scores: &[f64], labels: &[bool], fpr_target: f64) -> Result<f64> {
    check_scores(scores, labels)?;
    let negatives = labels.iter().filter(|&&l| !l).count();
    if negatives == 0 {
        return Err(Error::NoNegatives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut best = f64::INFINITY;
    let mut false_pos = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            false_pos += usize::from(!labels[order[i]]);
            i += 1;
        }
        if false_pos as f64 / negatives as f64 > fpr_target {
            break;
        }
        best = t;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallAtFpr {
    pub recall: f64,
    /// False-positive rate at the threshold on the same rows; 0 when there are no negatives.
    pub realized_fpr: f64,
}

pub fn recall_at_fpr(scores: &[f64], labels: &[bool], threshold: f64) -> Result<RecallAtFpr> {
    check_scores(scores, labels)?;
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let flagged = s >= threshold;
        pos += usize::from(l);
        tp += usize::from(l && flagged);
        fp += usize::from(!l && flagged);
    }
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let neg = labels.len() - pos;
    Ok(RecallAtFpr {
        recall: tp as f64 / pos as f64,
        realized_fpr: if neg == 0 { 0.0 } else { fp as f64 / neg as f64 },
    })
}

/// Mean precision at the rank of each positive, ranking by descending score. Equal
/// scores keep their input order. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok((hits > 0).then(|| sum / hits as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanAveragePrecision {
    pub map: f64,
    /// `None` for concepts without positives.
    pub per_concept: Vec<Option<f64>>,
    pub excluded: usize,
}

/// Macro mAP over concept columns; columns without a positive label are left out.
/// Labels are positive when `> 0.5`.
pub fn mean_average_precision(scores: &Matrix, labels: &Matrix) -> Result<MeanAveragePrecision> {
    if scores.shape() != labels.shape() {
        return Err(Error::Shape {
            context: "mean_average_precision",
            left: scores.shape(),
            right: labels.shape(),
        });
    }
    let (n, k) = scores.shape();
    let mut per_concept = Vec::with_capacity(k);
    for c in 0..k {
        let s: Vec<f64> = (0..n).map(|i| scores[(i, c)]).collect();
        let l: Vec<bool> = (0..n).map(|i| labels[(i, c)] > 0.5).collect();
        per_concept.push(average_precision(&s, &l)?);
    }
    let included: Vec<f64> = per_concept.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::AllConceptsExcluded);
    }
    Ok(MeanAveragePrecision {
        map: included.iter().sum::<f64>() / included.len() as f64,
        excluded: k - included.len(),
        per_concept,
    })
}

/// Front membership under weak dominance: a point is dropped only if another point is at
/// least as good in both coordinates and strictly better in one. Duplicates of a front
/// point stay on the front. `O(n log n)`.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].0.total_cmp(&points[a].0));
    let mut front = vec![false; points.len()];
    let mut best_higher = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let recall = points[order[i]].0;
        let mut j = i;
        let mut group_best = f64::NEG_INFINITY;
        while j < order.len() && points[order[j]].0 == recall {
            group_best = group_best.max(points[order[j]].1);
            j += 1;
        }
        for &p in &order[i..j] {
            let m = points[p].1;
            front[p] = m == group_best && m > best_higher;
        }
        best_higher = best_higher.max(group_best);
        i = j;
    }
    front
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub fpr_target: f64,
    /// Chosen on validation.
    pub threshold: f64,
    pub recall_at_fpr: f64,
    /// Test FPR at the validation threshold; may exceed the target.
    pub realized_fpr: f64,
    pub per_concept_ap: Vec<Option<f64>>,
    pub map: f64,
    pub concepts_excluded: usize,
    /// Mean Jaccard between concepts predicted at 0.5 and golden concepts on test.
    pub concept_jaccard: f64,
    pub pareto_member: bool,
}

/// Rows needed for evaluation: validation for the threshold, test for the metrics.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub validation: TrainingSet,
    pub test: TrainingSet,
}

impl EvalSets {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let k = ds.taxonomy.len();
        let build = |split| {
            let rows: Vec<&TransactionRecord> = ds.split(split).collect();
            TrainingSet::from_records(&rows, k, ConceptSource::Golden)
        };
        Ok(Self {
            validation: build(Split::Validation)?,
            test: build(Split::Test)?,
        })
    }
}

pub fn fraud_scores(model: &ConceptBottleneckModel, x: &Matrix) -> Result<Vec<f64>> {
    Ok(model.predict(x)?.class_scores(1))
}

pub fn evaluate(model: &ConceptBottleneckModel, sets: &EvalSets, fpr_target: f64) -> Result<EvalReport> {
    let val_scores = fraud_scores(model, &sets.validation.x)?;
    let threshold = threshold_at_fpr(&val_scores, &sets.validation.fraud, fpr_target)?;
    let test_pred = model.predict(&sets.test.x)?;
    let r = recall_at_fpr(&test_pred.class_scores(1), &sets.test.fraud, threshold)?;
    let m = mean_average_precision(&test_pred.concepts, &sets.test.y_concepts)?;

    let k = test_pred.concepts.cols();
    let mut jaccard_sum = 0.0;
    for i in 0..sets.test.len() {
        let predicted = ConceptVector::from_bits(test_pred.concepts.row(i).iter().map(|&p| p >= 0.5).collect());
        let golden = ConceptVector::from_bits((0..k).map(|c| sets.test.y_concepts[(i, c)] > 0.5).collect());
        jaccard_sum += jaccard(&predicted, &golden)?;
    }

    Ok(EvalReport {
        fpr_target,
        threshold,
        recall_at_fpr: r.recall,
        realized_fpr: r.realized_fpr,
        per_concept_ap: m.per_concept,
        map: m.map,
        concepts_excluded: m.excluded,
        concept_jaccard: jaccard_sum / sets.test.len().max(1) as f64,
        pareto_member: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        // separable: min positive score, FPR 0
        let s = [0.1, 0.2, 0.7, 0.9];
        let l = [false, false, true, true];
        assert_eq!(threshold_at_fpr(&s, &l, 0.05).unwrap(), 0.7);

        let s = [0.9, 0.4, 0.8, 0.2];
        let l = [true, true, false, false];
        assert_eq!(threshold_at_fpr(&s, &l, 0.5).unwrap(), 0.4);
        let r = recall_at_fpr(&s, &l, 0.4).unwrap();
        assert_eq!((r.recall, r.realized_fpr), (1.0, 0.5));

        // tied top score, target 0
        let s = [0.9, 0.9, 0.1];
        let l = [true, false, false];
        let t = threshold_at_fpr(&s, &l, 0.0).unwrap();
        assert_eq!(t, f64::INFINITY);
        assert_eq!(recall_at_fpr(&s, &l, t).unwrap().recall, 0.0);

        assert!(matches!(threshold_at_fpr(&[0.1], &[true], 0.1), Err(Error::NoNegatives)));
    }

    #[test]
    fn recall_endpoints() {
        let s = [0.3, 0.6, 0.1];
        let l = [true, false, true];
        let all = recall_at_fpr(&s, &l, f64::NEG_INFINITY).unwrap();
        assert_eq!((all.recall, all.realized_fpr), (1.0, 1.0));
        assert_eq!(recall_at_fpr(&s, &l, f64::INFINITY).unwrap().recall, 0.0);
        assert!(matches!(recall_at_fpr(&s, &[false; 3], 0.5), Err(Error::NoPositives)));
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.7, 0.3], &[true, false, true]).unwrap().unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.2, 0.9, 0.1], &[false, true, false]).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[0.2, 0.9], &[false, false]).unwrap(), None);
        assert!(average_precision(&[0.2], &[false, true]).is_err());
        // ties keep input order: the negative listed first ranks first
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap().unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn map_excludes_negative_columns() {
        let scores = Matrix::from_rows(&[vec![0.9, 0.1, 0.4], vec![0.2, 0.8, 0.3]]).unwrap();
        let labels = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let m = mean_average_precision(&scores, &labels).unwrap();
        assert_eq!(m.per_concept, vec![Some(1.0), Some(0.5), None]);
        assert_eq!((m.map, m.excluded), (0.75, 1));
        let none = Matrix::zeros(2, 3);
        assert!(matches!(mean_average_precision(&scores, &none), Err(Error::AllConceptsExcluded)));
    }

    #[test]
    fn pareto_examples() {
        let pts = [(0.5, 0.5), (0.6, 0.4), (0.4, 0.6), (0.45, 0.45)];
        assert_eq!(pareto_front(&pts), vec![true, true, true, false]);
        assert_eq!(pareto_front(&[(0.1, 0.2)]), vec![true]);
        assert_eq!(pareto_front(&[(0.3, 0.3); 4]), vec![true; 4]);
        // same recall, lower map is dominated
        assert_eq!(pareto_front(&[(0.5, 0.5), (0.5, 0.4)]), vec![true, false]);
        assert!(pareto_front(&[]).is_empty());
    }
}
