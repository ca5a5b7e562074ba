use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split, TransactionRecord};
use crate::weak_labels::{jaccard, ConceptVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: Split,
    pub size: usize,
    pub fraud: usize,
    /// `None` for an empty split.
    pub prevalence: Option<f64>,
    pub golden: usize,
}

/// Statistics recomputed from the records themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub splits: Vec<SplitStats>,
    pub golden_train_size: usize,
    pub golden_train_fraud_fraction: Option<f64>,
    /// Records carrying both golden and noisy vectors.
    pub jaccard_records: usize,
    pub mean_jaccard: Option<f64>,
    pub median_jaccard: Option<f64>,
    /// Positive rate of each concept among records with golden labels.
    pub golden_concept_rates: Vec<Option<f64>>,
    /// Positive rate of each concept among records with noisy labels.
    pub noisy_concept_rates: Vec<Option<f64>>,
    /// `(rule_id, share of records that triggered it)`, in rule-id order.
    pub rule_firing_rates: Vec<(String, f64)>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(dataset: &Dataset) -> DatasetReport {
    let records = &dataset.records;
    let k = dataset.taxonomy.len();

    let splits = Split::ALL
        .iter()
        .map(|&split| {
            let rows: Vec<_> = records.iter().filter(|r| r.split == split).collect();
            let fraud = rows.iter().filter(|r| r.is_fraud()).count();
            SplitStats {
                split,
                size: rows.len(),
                fraud,
                prevalence: ratio(fraud, rows.len()),
                golden: rows.iter().filter(|r| r.is_golden()).count(),
            }
        })
        .collect();

    let golden_train: Vec<_> = dataset.golden_train();
    let golden_train_fraud = golden_train.iter().filter(|r| r.is_fraud()).count();

    let mut jaccards: Vec<f64> = records
        .iter()
        .filter_map(|r| match (&r.golden_concepts, &r.noisy_concepts) {
            (Some(g), Some(n)) => jaccard(g, n).ok(),
            _ => None,
        })
        .collect();
    let mean_jaccard =
        (!jaccards.is_empty()).then(|| jaccards.iter().sum::<f64>() / jaccards.len() as f64);
    jaccards.sort_by(f64::total_cmp);
    let median_jaccard = match jaccards.len() {
        0 => None,
        n if n % 2 == 1 => Some(jaccards[n / 2]),
        n => Some(0.5 * (jaccards[n / 2 - 1] + jaccards[n / 2])),
    };

    let concept_rates = |pick: fn(&TransactionRecord) -> Option<&ConceptVector>| {
        let mut counts = vec![0usize; k];
        let mut total = 0usize;
        for v in records.iter().filter_map(pick) {
            total += 1;
            for c in v.ones() {
                counts[c] += 1;
            }
        }
        counts.into_iter().map(|c| ratio(c, total)).collect::<Vec<_>>()
    };

    let rule_firing_rates = dataset
        .rule_map
        .iter()
        .map(|(id, _)| {
            let hits = records.iter().filter(|r| r.triggered_rules.contains(id)).count();
            (id.clone(), ratio(hits, records.len()).unwrap_or(0.0))
        })
        .collect();

    DatasetReport {
        splits,
        golden_train_size: golden_train.len(),
        golden_train_fraud_fraction: ratio(golden_train_fraud, golden_train.len()),
        jaccard_records: jaccards.len(),
        mean_jaccard,
        median_jaccard,
        golden_concept_rates: concept_rates(|r| r.golden_concepts.as_ref()),
        noisy_concept_rates: concept_rates(|r| r.noisy_concepts.as_ref()),
        rule_firing_rates,
    }
}

impl DatasetReport {
    pub fn split(&self, split: Split) -> &SplitStats {
        self.splits
            .iter()
            .find(|s| s.split == split)
            .expect("report covers every split")
    }
}
