//! Synthetic fraud-transaction datasets with planted concepts and rule-level label noise.
//!
//! Generation, fully determined by [`GenConfig::seed`]:
//!
//! 1. features `x ~ N(0, I_d)`;
//! 2. golden concepts `y_c ~ Bernoulli(sigmoid(w_c · x + b_c))` with sparse planted `w_c`;
//! 3. fraud score `s = w_f · y_E + ε`, and the top `prevalence` share of each split is
//!    labelled fraud (a per-split quantile threshold);
//! 4. every rule watches one primary concept. It misses a present concept with
//!    probability `level · max_miss_rate` and fires spuriously with probability
//!    `level · max_false_fire_rate · 2σ(v_r · x)`. With probability
//!    `level · max_extra_concept_prob` the rule's mapping also claims a second concept.
//!    `level ∈ [0, 1]` is bisected so the mean Jaccard between noisy and golden vectors
//!    hits `noise_target_jaccard`;
//! 5. a golden subset is drawn from the training split, stratified to
//!    `golden_fraud_fraction` fraud.
//!
//! Only the golden subset and the validation/test splits keep their golden concepts;
//! every record carries the noisy vector produced by the rule map.

mod files;
mod report;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelSource, Split, TransactionRecord};
use crate::nn::{sigmoid, Activation, DenseLayer, Matrix};
use crate::weak_labels::{self, ConceptTaxonomy, ConceptVector, RuleConceptMap, UnknownRulePolicy};
use crate::{Error, Result};

pub use files::{load_dataset, save_dataset, DatasetPaths, Provenance};
pub use report::{report, DatasetReport, SplitStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPrevalence {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitPrevalence {
    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

impl Default for SplitPrevalence {
    fn default() -> Self {
        Self {
            train: 0.02,
            validation: 0.04,
            test: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Total records across all splits; the training split gets whatever validation and
    /// test leave over.
    pub n_total: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub feature_dim: usize,
    pub concept_count: usize,
    /// Custom concept names; defaults to the built-in fraud taxonomy when `concept_count`
    /// is 14, numbered names otherwise.
    pub concept_names: Option<Vec<String>>,
    pub rule_count: usize,
    pub prevalence: SplitPrevalence,
    pub golden_subset_size: usize,
    pub golden_fraud_fraction: f64,
    pub noise_target_jaccard: f64,
    pub max_miss_rate: f64,
    pub max_false_fire_rate: f64,
    pub max_extra_concept_prob: f64,
    /// Mean marginal rate of each golden concept.
    pub concept_base_rate: f64,
    /// Norm of each planted concept weight vector.
    pub concept_signal: f64,
    /// Standard deviation of the noise added to the fraud score.
    pub decision_noise: f64,
    /// Fit a logistic probe on golden concepts and require held-out AUC above 0.9.
    pub check_learnability: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_total: 54_000,
            validation_size: 2_000,
            test_size: 2_000,
            feature_dim: 20,
            concept_count: 14,
            concept_names: None,
            rule_count: 28,
            prevalence: SplitPrevalence::default(),
            golden_subset_size: 1_300,
            golden_fraud_fraction: 0.37,
            noise_target_jaccard: 0.4,
            max_miss_rate: 0.6,
            max_false_fire_rate: 0.1,
            max_extra_concept_prob: 1.0,
            concept_base_rate: 0.12,
            concept_signal: 3.0,
            decision_noise: 0.5,
            check_learnability: true,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// The desk-scale benchmark used to compare training strategies: 50k training rows of
    /// which ~840 carry golden concepts.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            golden_subset_size: 842,
            seed,
            ..Self::default()
        }
    }

    pub fn train_size(&self) -> usize {
        self.n_total
            .saturating_sub(self.validation_size + self.test_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.validation_size + self.test_size >= self.n_total {
            return bad("n_total must exceed validation_size + test_size".into());
        }
        if self.feature_dim == 0 || self.concept_count == 0 || self.rule_count == 0 {
            return bad("feature_dim, concept_count and rule_count must be >= 1".into());
        }
        for split in Split::ALL {
            let p = self.prevalence.get(split);
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("prevalence.{split} must lie in (0, 1), got {p}"));
            }
        }
        if self.golden_subset_size > self.train_size() {
            return bad("golden_subset_size exceeds the training split".into());
        }
        if !(0.0..=1.0).contains(&self.golden_fraud_fraction) {
            return bad("golden_fraud_fraction must lie in [0, 1]".into());
        }
        if !(self.noise_target_jaccard > 0.0 && self.noise_target_jaccard <= 1.0) {
            return bad("noise_target_jaccard must lie in (0, 1]".into());
        }
        for (name, v) in [
            ("max_miss_rate", self.max_miss_rate),
            ("max_false_fire_rate", self.max_false_fire_rate),
            ("max_extra_concept_prob", self.max_extra_concept_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.max_false_fire_rate > 0.5 {
            return bad("max_false_fire_rate must be <= 0.5".into());
        }
        if !(self.concept_base_rate > 0.0 && self.concept_base_rate < 0.5) {
            return bad("concept_base_rate must lie in (0, 0.5)".into());
        }
        if !(self.concept_signal >= 0.0 && self.decision_noise >= 0.0) {
            return bad("concept_signal and decision_noise must be >= 0".into());
        }
        if let Some(names) = &self.concept_names {
            if names.len() != self.concept_count {
                return bad(format!(
                    "{} concept names for concept_count {}",
                    names.len(),
                    self.concept_count
                ));
            }
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<ConceptTaxonomy> {
        match &self.concept_names {
            Some(names) => ConceptTaxonomy::new(names.clone()),
            None if self.concept_count == 14 => Ok(ConceptTaxonomy::fraud_default()),
            None => ConceptTaxonomy::new(
                (1..=self.concept_count)
                    .map(|i| format!("Concept {i:02}"))
                    .collect(),
            ),
        }
    }
}

/// Values fitted during generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Noise level in `[0, 1]` chosen by bisection.
    pub noise_level: f64,
    pub miss_rate: f64,
    pub false_fire_rate: f64,
    pub extra_concept_prob: f64,
    /// Mean noisy-vs-golden Jaccard over every generated record.
    pub population_jaccard: f64,
    /// Fraud-score threshold of each split (train, validation, test).
    pub decision_thresholds: [f64; 3],
    /// Held-out AUC of a logistic probe on golden concepts, when checked.
    pub probe_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub data: Dataset,
    pub config: GenConfig,
    pub calibration: Calibration,
}

/// Planted generative parameters.
struct Planted {
    concept_weights: Matrix,
    concept_bias: Vec<f64>,
    fraud_weights: Vec<f64>,
    rule_primary: Vec<usize>,
    rule_extra: Vec<usize>,
    rule_extra_draw: Vec<f64>,
    false_fire_direction: Matrix,
}

/// Per-(record, rule) uniform draws reused across bisection steps so the mean Jaccard
/// moves smoothly with the noise level.
struct RuleDraws {
    rules: usize,
    miss: Vec<f64>,
    false_fire: Vec<f64>,
    /// `2σ(v_r · x)` per record and rule.
    propensity: Vec<f64>,
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

fn plant(cfg: &GenConfig) -> Planted {
    let mut rng = stream(cfg.seed, 1);
    let (d, k) = (cfg.feature_dim, cfg.concept_count);
    let support = d.clamp(1, 4);
    let mut w = Matrix::zeros(k, d);
    let mut bias = Vec::with_capacity(k);
    let mut features: Vec<usize> = (0..d).collect();
    for c in 0..k {
        features.shuffle(&mut rng);
        let mut raw: Vec<f64> = (0..support).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for v in &mut raw {
            *v *= cfg.concept_signal / norm;
        }
        for (&f, &v) in features.iter().zip(&raw) {
            w[(c, f)] = v;
        }
        // E[σ(b + N(0, s²))] ≈ σ(b / sqrt(1 + π s² / 8))
        let base = cfg.concept_base_rate * rng.random_range(0.5..1.5);
        let s2 = cfg.concept_signal * cfg.concept_signal;
        let logit = (base / (1.0 - base)).ln();
        bias.push(logit * (1.0 + std::f64::consts::PI * s2 / 8.0).sqrt());
    }
    let fraud_weights = (0..k).map(|_| rng.random_range(0.25..2.0)).collect();
    let rule_primary: Vec<usize> = (0..cfg.rule_count).map(|r| r % k).collect();
    let rule_extra = rule_primary
        .iter()
        .map(|&p| {
            if k == 1 {
                p
            } else {
                (p + rng.random_range(1..k)) % k
            }
        })
        .collect();
    let rule_extra_draw = (0..cfg.rule_count).map(|_| rng.random::<f64>()).collect();
    let mut dir = Matrix::zeros(cfg.rule_count, d);
    for r in 0..cfg.rule_count {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for (j, v) in raw.iter().enumerate() {
            dir[(r, j)] = 2.0 * v / norm;
        }
    }
    Planted {
        concept_weights: w,
        concept_bias: bias,
        fraud_weights,
        rule_primary,
        rule_extra,
        rule_extra_draw,
        false_fire_direction: dir,
    }
}

struct Rates {
    miss: f64,
    false_fire: f64,
    extra: f64,
}

impl Rates {
    fn at(level: f64, cfg: &GenConfig) -> Self {
        Self {
            miss: level * cfg.max_miss_rate,
            false_fire: level * cfg.max_false_fire_rate,
            extra: level * cfg.max_extra_concept_prob,
        }
    }
}

/// Fired rule indices for record `i`.
fn fired_rules(i: usize, golden: &[bool], planted: &Planted, draws: &RuleDraws, rates: &Rates) -> Vec<usize> {
    let base = i * draws.rules;
    (0..draws.rules)
        .filter(|&r| {
            let detects = golden[planted.rule_primary[r]] && draws.miss[base + r] >= rates.miss;
            let spurious = draws.false_fire[base + r] < rates.false_fire * draws.propensity[base + r];
            detects || spurious
        })
        .collect()
}

fn rule_concepts(r: usize, planted: &Planted, rates: &Rates) -> (usize, Option<usize>) {
    let extra = (planted.rule_extra_draw[r] < rates.extra && planted.rule_extra[r] != planted.rule_primary[r])
        .then_some(planted.rule_extra[r]);
    (planted.rule_primary[r], extra)
}

fn mean_jaccard(golden: &[Vec<bool>], planted: &Planted, draws: &RuleDraws, rates: &Rates, k: usize) -> f64 {
    let mut total = 0.0;
    let mut noisy = vec![false; k];
    for (i, g) in golden.iter().enumerate() {
        noisy.iter_mut().for_each(|b| *b = false);
        for r in fired_rules(i, g, planted, draws, rates) {
            let (p, e) = rule_concepts(r, planted, rates);
            noisy[p] = true;
            if let Some(e) = e {
                noisy[e] = true;
            }
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in g.iter().zip(&noisy) {
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    total / golden.len() as f64
}

/// Bisection on the noise level. Returns the level and the mean Jaccard it produces.
fn calibrate_noise(
    golden: &[Vec<bool>],
    planted: &Planted,
    draws: &RuleDraws,
    cfg: &GenConfig,
) -> Result<(f64, f64)> {
    let k = cfg.concept_count;
    let target = cfg.noise_target_jaccard;
    let at = |level: f64| mean_jaccard(golden, planted, draws, &Rates::at(level, cfg), k);
    let clean = at(0.0);
    if clean <= target {
        return Ok((0.0, clean));
    }
    let noisiest = at(1.0);
    if noisiest > target + 0.05 {
        return Err(Error::Calibration {
            what: format!("noise cannot push mean Jaccard down to {target}"),
            realized: noisiest,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut best, mut best_j) = (1.0, noisiest);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let j = at(mid);
        if (j - target).abs() < (best_j - target).abs() {
            best = mid;
            best_j = j;
        }
        if (j - target).abs() < 1e-3 {
            break;
        }
        if j > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best_j - target).abs() > 0.05 {
        return Err(Error::Calibration {
            what: format!("mean Jaccard target {target} not reached within 0.05"),
            realized: best_j,
        });
    }
    Ok((best, best_j))
}

/// Indices of the top `round(n · prevalence)` scores and the threshold between them.
fn quantile_labels(scores: &[f64], prevalence: f64, split: Split) -> Result<(Vec<bool>, f64)> {
    let n = scores.len();
    let positives = (n as f64 * prevalence).round() as usize;
    if positives == 0 || positives >= n {
        return Err(Error::Calibration {
            what: format!("prevalence {prevalence} on {n} {split} rows"),
            realized: positives as f64 / n.max(1) as f64,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![false; n];
    for &i in &order[..positives] {
        labels[i] = true;
    }
    let threshold = 0.5 * (scores[order[positives - 1]] + scores[order[positives]]);
    Ok((labels, threshold))
}

pub(crate) fn rule_id(r: usize) -> String {
    format!("r{:03}", r + 1)
}

pub fn generate(cfg: &GenConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let taxonomy = cfg.taxonomy()?;
    let (n, d, k, rules) = (cfg.n_total, cfg.feature_dim, cfg.concept_count, cfg.rule_count);
    let planted = plant(cfg);

    let mut feature_rng = stream(cfg.seed, 2);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| feature_rng.sample(StandardNormal)).collect())
        .collect();

    let mut concept_rng = stream(cfg.seed, 3);
    let golden: Vec<Vec<bool>> = features
        .iter()
        .map(|x| {
            (0..k)
                .map(|c| {
                    let z: f64 = planted
                        .concept_weights
                        .row(c)
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
                        + planted.concept_bias[c];
                    concept_rng.random::<f64>() < sigmoid(z)
                })
                .collect()
        })
        .collect();

    let mut decision_rng = stream(cfg.seed, 4);
    let scores: Vec<f64> = golden
        .iter()
        .map(|g| {
            let signal: f64 = g
                .iter()
                .zip(&planted.fraud_weights)
                .filter(|(&b, _)| b)
                .map(|(_, w)| w)
                .sum();
            let eps: f64 = decision_rng.sample(StandardNormal);
            signal + cfg.decision_noise * eps
        })
        .collect();

    let n_train = cfg.train_size();
    let bounds = [
        (Split::Train, 0, n_train),
        (Split::Validation, n_train, n_train + cfg.validation_size),
        (Split::Test, n_train + cfg.validation_size, n),
    ];
    let mut fraud = vec![false; n];
    let mut thresholds = [0.0; 3];
    for (slot, &(split, start, end)) in bounds.iter().enumerate() {
        let (labels, tau) = quantile_labels(&scores[start..end], cfg.prevalence.get(split), split)?;
        fraud[start..end].copy_from_slice(&labels);
        thresholds[slot] = tau;
    }

    let mut draw_rng = stream(cfg.seed, 5);
    let mut draws = RuleDraws {
        rules,
        miss: Vec::with_capacity(n * rules),
        false_fire: Vec::with_capacity(n * rules),
        propensity: Vec::with_capacity(n * rules),
    };
    for x in &features {
        for r in 0..rules {
            draws.miss.push(draw_rng.random());
            draws.false_fire.push(draw_rng.random());
            let z: f64 = planted
                .false_fire_direction
                .row(r)
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
            draws.propensity.push(2.0 * sigmoid(z));
        }
    }

    let (level, population_jaccard) = calibrate_noise(&golden, &planted, &draws, cfg)?;
    let rates = Rates::at(level, cfg);

    let mut rule_map = RuleConceptMap::new();
    for r in 0..rules {
        let (p, extra) = rule_concepts(r, &planted, &rates);
        let mut names = vec![taxonomy.names()[p].as_str()];
        if let Some(e) = extra {
            names.push(taxonomy.names()[e].as_str());
        }
        let description = format!("Watches for {} patterns (check {})", taxonomy.names()[p], r / k + 1);
        rule_map.insert(&taxonomy, &rule_id(r), &description, &names)?;
    }

    let golden_ids = draw_golden_subset(cfg, &fraud[..n_train])?;

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + cfg.validation_size {
            Split::Validation
        } else {
            Split::Test
        };
        let triggered: BTreeSet<String> = fired_rules(i, &golden[i], &planted, &draws, &rates)
            .into_iter()
            .map(rule_id)
            .collect();
        let noisy = weak_labels::annotate(&triggered, &rule_map, &taxonomy, UnknownRulePolicy::Strict)?.concepts;
        let keeps_golden = split != Split::Train || golden_ids.contains(&i);
        records.push(TransactionRecord {
            id: i as u64,
            split,
            features: features[i].clone(),
            decision_label: u8::from(fraud[i]),
            triggered_rules: triggered,
            golden_concepts: keeps_golden.then(|| ConceptVector::from_bits(golden[i].clone())),
            noisy_concepts: Some(noisy),
            label_source: if keeps_golden {
                LabelSource::Golden
            } else {
                LabelSource::Noisy
            },
        });
    }

    let probe_auc = if cfg.check_learnability {
        let auc = learnability_probe(&golden[..n_train], &fraud[..n_train], &golden[n_train..], &fraud[n_train..]);
        if let Some(a) = auc {
            if a <= 0.9 {
                return Err(Error::Calibration {
                    what: "logistic probe on golden concepts must reach held-out AUC > 0.9".into(),
                    realized: a,
                });
            }
        }
        auc
    } else {
        None
    };

    Ok(SyntheticDataset {
        data: Dataset {
            records,
            taxonomy,
            rule_map,
        },
        config: cfg.clone(),
        calibration: Calibration {
            noise_level: level,
            miss_rate: rates.miss,
            false_fire_rate: rates.false_fire,
            extra_concept_prob: rates.extra,
            population_jaccard,
            decision_thresholds: thresholds,
            probe_auc,
        },
    })
}

/// Stratified draw of the golden subset from the training split.
fn draw_golden_subset(cfg: &GenConfig, train_fraud: &[bool]) -> Result<BTreeSet<usize>> {
    let mut rng = stream(cfg.seed, 6);
    let size = cfg.golden_subset_size;
    let want_fraud = (size as f64 * cfg.golden_fraud_fraction).round() as usize;
    let want_legit = size - want_fraud;
    let mut frauds: Vec<usize> = (0..train_fraud.len()).filter(|&i| train_fraud[i]).collect();
    let mut legit: Vec<usize> = (0..train_fraud.len()).filter(|&i| !train_fraud[i]).collect();
    if frauds.len() < want_fraud || legit.len() < want_legit {
        return Err(Error::Calibration {
            what: format!(
                "golden subset needs {want_fraud} fraud / {want_legit} legit training rows"
            ),
            realized: frauds.len() as f64,
        });
    }
    frauds.shuffle(&mut rng);
    legit.shuffle(&mut rng);
    Ok(frauds[..want_fraud]
        .iter()
        .chain(&legit[..want_legit])
        .copied()
        .collect())
}

/// Logistic regression from golden concepts to the fraud label, trained by full-batch
/// gradient descent; returns held-out ROC AUC.
fn learnability_probe(
    train_x: &[Vec<bool>],
    train_y: &[bool],
    test_x: &[Vec<bool>],
    test_y: &[bool],
) -> Option<f64> {
    let k = train_x.first()?.len();
    let to_matrix = |rows: &[Vec<bool>]| {
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&b| f64::from(u8::from(b))))
            .collect();
        Matrix::from_vec(rows.len(), k, data).expect("finite")
    };
    let x = to_matrix(train_x);
    let mut layer = DenseLayer::zeros(k, 1, Activation::Sigmoid);
    let n = x.rows() as f64;
    for _ in 0..300 {
        let p = layer.forward(&x).ok()?;
        let mut dz = p;
        for (g, &y) in dz.as_mut_slice().iter_mut().zip(train_y) {
            *g = (*g - f64::from(u8::from(y))) / n;
        }
        let (grads, _) = layer.backward_from_preactivation(&x, &dz).ok()?;
        layer.apply_gradients(&grads, 4.0);
    }
    let scores = layer.forward(&to_matrix(test_x)).ok()?.into_vec();
    roc_auc(&scores, test_y)
}

/// Mann–Whitney AUC with ties counted as one half.
pub(crate) fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}
