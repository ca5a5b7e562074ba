//! Cross-entropy losses. Probabilities are clamped to `[EPS, 1 − EPS]` before taking logs.

use super::Matrix;
use crate::{Error, Result};

/// Probability clamp used inside both losses.
pub const EPS: f64 = 1e-12;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// Multi-label binary cross-entropy, summed over columns and averaged over the rows whose
/// `mask` flag is set. Returns 0 when every row is masked out.
pub fn multilabel_bce(pred: &Matrix, target: &Matrix, mask: &[bool]) -> Result<f64> {
    pred.check_same_shape(target, "multilabel_bce")?;
    if mask.len() != pred.rows() {
        return Err(Error::LengthMismatch {
            left: pred.rows(),
            right: mask.len(),
        });
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        counted += 1;
        for (&p, &y) in pred.row(i).iter().zip(target.row(i)) {
            let p = clamp_prob(p);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    if counted == 0 {
        return Ok(0.0);
    }
    Ok(total / counted as f64)
}

/// Mean over rows of `−log p(true class)`. Target rows must be one-hot.
pub fn categorical_ce(pred: &Matrix, target: &Matrix) -> Result<f64> {
    pred.check_same_shape(target, "categorical_ce")?;
    if pred.rows() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..pred.rows() {
        let class = one_hot_index(target.row(i)).ok_or(Error::NotOneHot { row: i })?;
        total -= clamp_prob(pred[(i, class)]).ln();
    }
    Ok(total / pred.rows() as f64)
}

/// Index of the single `1.0` entry, or `None` when the row is not one-hot.
pub fn one_hot_index(row: &[f64]) -> Option<usize> {
    let mut found = None;
    for (j, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(j);
        } else if v != 0.0 {
            return None;
        }
    }
    found
}
