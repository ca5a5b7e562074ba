//! Threshold selection at a false positive rate budget, recall, average precision and
//! Pareto selection on hand-made scores.
//!
//!     cargo run --example metrics

use cbx::eval::{average_precision, mean_average_precision, pareto_front, recall_at_fpr, threshold_at_fpr};
use cbx::nn::Matrix;

fn main() -> cbx::Result<()> {
    let scores = [0.95, 0.9, 0.8, 0.75, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1];
    let labels = [true, false, true, true, false, true, false, false, false, false];
    for target in [0.0, 0.2, 0.5] {
        let t = threshold_at_fpr(&scores, &labels, target)?;
        let r = recall_at_fpr(&scores, &labels, t)?;
        println!("fpr <= {target:.1}: threshold {t}, recall {:.3}, realized fpr {:.3}", r.recall, r.realized_fpr);
    }
    println!("average precision {:.4}", average_precision(&scores, &labels)?.unwrap_or(f64::NAN));

    // three concepts, the last one never occurs and is left out of the mean
    let concept_scores = Matrix::from_rows(&[
        vec![0.9, 0.2, 0.1],
        vec![0.8, 0.7, 0.3],
        vec![0.3, 0.6, 0.2],
        vec![0.1, 0.9, 0.4],
    ])?;
    let concept_labels = Matrix::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0],
    ])?;
    let m = mean_average_precision(&concept_scores, &concept_labels)?;
    println!("mAP {:.4}, per concept {:?}, {} excluded", m.map, m.per_concept, m.excluded);

    let models = [(0.30, 0.60), (0.45, 0.52), (0.28, 0.65), (0.40, 0.50), (0.45, 0.40)];
    for ((recall, map), on) in models.iter().zip(pareto_front(&models)) {
        println!("recall {recall:.2}  mAP {map:.2}  {}", if on { "front" } else { "dominated" });
    }
    Ok(())
}
