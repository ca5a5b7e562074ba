//! Stratified mini-batch sampling with fixed per-batch composition.
//!
//! Rows are split into strata by label source (golden / noisy) and decision label
//! (fraud / legit), depending on which fractions the plan fixes. Each stratum keeps its
//! own shuffled queue; a batch takes a fixed number of rows from every stratum. A queue
//! that runs dry is reshuffled and continues, so a small stratum (a few hundred golden
//! rows) is cycled many times per epoch. Queues persist across epochs.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchPlan {
    pub batch_size: usize,
    /// Share of fraud rows in every batch; `None` samples without regard to the label.
    pub fraud_prevalence: Option<f64>,
    /// Share of golden-labelled rows in every batch; `None` ignores the label source.
    pub golden_fraction: Option<f64>,
    pub shuffle_seed: u64,
}

impl BatchPlan {
    pub fn new(batch_size: usize, shuffle_seed: u64) -> Self {
        Self {
            batch_size,
            fraud_prevalence: None,
            golden_fraction: None,
            shuffle_seed,
        }
    }

    pub fn with_fraud_prevalence(mut self, prevalence: f64) -> Self {
        self.fraud_prevalence = Some(prevalence);
        self
    }

    pub fn with_golden_fraction(mut self, fraction: f64) -> Self {
        self.golden_fraction = Some(fraction);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if let Some(p) = self.fraud_prevalence {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "fraud_prevalence must lie in (0, 1), got {p}"
                )));
            }
        }
        if let Some(g) = self.golden_fraction {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidConfig(format!(
                    "golden_fraction must lie in [0, 1], got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Round half up. The small slack absorbs representation error such as
/// `100.0 * 0.145 = 14.499999999999998`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// `(golden, fraud)`; `None` where the plan does not split on that label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StratumKey {
    pub golden: Option<bool>,
    pub fraud: Option<bool>,
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match self.golden {
            Some(true) => "golden",
            Some(false) => "noisy",
            None => "any-source",
        };
        let label = match self.fraud {
            Some(true) => "fraud",
            Some(false) => "legit",
            None => "any-label",
        };
        write!(f, "{source}/{label}")
    }
}

/// Rows per stratum in one batch. Marginals are rounded first, so every batch holds
/// exactly `round(B · prevalence)` fraud rows and `round(B · golden_fraction)` golden
/// rows; the complementary strata take the remainder.
pub fn stratum_counts(
    batch_size: usize,
    fraud_prevalence: Option<f64>,
    golden_fraction: Option<f64>,
) -> BTreeMap<StratumKey, usize> {
    let b = batch_size;
    let mut counts = BTreeMap::new();
    let key = |golden, fraud| StratumKey { golden, fraud };
    match (golden_fraction, fraud_prevalence) {
        (None, None) => {
            counts.insert(key(None, None), b);
        }
        (None, Some(p)) => {
            let f = round_half_up(b as f64 * p).min(b);
            counts.insert(key(None, Some(true)), f);
            counts.insert(key(None, Some(false)), b - f);
        }
        (Some(gf), None) => {
            let g = round_half_up(b as f64 * gf).min(b);
            counts.insert(key(Some(true), None), g);
            counts.insert(key(Some(false), None), b - g);
        }
        (Some(gf), Some(p)) => {
            let g = round_half_up(b as f64 * gf).min(b);
            let f = round_half_up(b as f64 * p).min(b);
            let golden_fraud = round_half_up(g as f64 * p).clamp(f.saturating_sub(b - g), g.min(f));
            let noisy_fraud = f - golden_fraud;
            counts.insert(key(Some(true), Some(true)), golden_fraud);
            counts.insert(key(Some(true), Some(false)), g - golden_fraud);
            counts.insert(key(Some(false), Some(true)), noisy_fraud);
            counts.insert(key(Some(false), Some(false)), b - g - noisy_fraud);
        }
    }
    counts.retain(|_, c| *c > 0);
    counts
}

struct Stratum {
    key: StratumKey,
    count: usize,
    rows: Vec<usize>,
    queue: Vec<usize>,
    cursor: usize,
}

impl Stratum {
    fn take(&mut self, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        let start = out.len();
        while out.len() - start < self.count {
            if self.cursor == self.queue.len() {
                // Fresh permutation; rows already in this batch go last so the batch
                // never repeats a row.
                self.queue.clone_from(&self.rows);
                self.queue.shuffle(rng);
                let taken = &out[start..];
                let (mut front, back): (Vec<usize>, Vec<usize>) =
                    self.queue.iter().partition(|r| !taken.contains(r));
                front.extend(back);
                self.queue = front;
                self.cursor = 0;
            }
            out.push(self.queue[self.cursor]);
            self.cursor += 1;
        }
    }
}

/// Stateful sampler; successive calls to [`BatchSampler::epoch`] continue the same
/// per-stratum queues.
pub struct BatchSampler {
    strata: Vec<Stratum>,
    batch_size: usize,
    batches_per_epoch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    /// `fraud[i]` and `golden[i]` describe row `i`. A golden fraction of 0 or 1 keeps
    /// only the noisy or golden rows and stops splitting on the source, so a plan with
    /// golden fraction 1 samples exactly like a plan over the golden rows alone.
    pub fn new(fraud: &[bool], golden: &[bool], plan: &BatchPlan) -> Result<Self> {
        plan.validate()?;
        if fraud.len() != golden.len() {
            return Err(Error::LengthMismatch {
                left: fraud.len(),
                right: golden.len(),
            });
        }
        let (source_filter, golden_fraction) = match plan.golden_fraction {
            Some(g) if g <= 0.0 => (Some(false), None),
            Some(g) if g >= 1.0 => (Some(true), None),
            other => (None, other),
        };
        let counts = stratum_counts(plan.batch_size, plan.fraud_prevalence, golden_fraction);

        let mut strata: Vec<Stratum> = counts
            .into_iter()
            .map(|(key, count)| Stratum {
                key,
                count,
                rows: Vec::new(),
                queue: Vec::new(),
                cursor: 0,
            })
            .collect();
        for i in 0..fraud.len() {
            if source_filter.is_some_and(|s| s != golden[i]) {
                continue;
            }
            let matches = |k: &StratumKey| {
                k.golden.is_none_or(|g| g == golden[i]) && k.fraud.is_none_or(|f| f == fraud[i])
            };
            if let Some(s) = strata.iter_mut().find(|s| matches(&s.key)) {
                s.rows.push(i);
            }
        }
        for s in &strata {
            if s.rows.len() < s.count {
                return Err(Error::StratumExhausted {
                    stratum: s.key.to_string(),
                    available: s.rows.len(),
                    needed: s.count,
                });
            }
        }
        let active: usize = strata.iter().map(|s| s.rows.len()).sum();
        Ok(Self {
            strata,
            batch_size: plan.batch_size,
            batches_per_epoch: active / plan.batch_size,
            rng: ChaCha8Rng::seed_from_u64(plan.shuffle_seed),
        })
    }

    /// Batches per epoch: active rows divided by the batch size, rounded down.
    pub fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
    }

    pub fn strata(&self) -> impl Iterator<Item = (StratumKey, usize, usize)> + '_ {
        self.strata.iter().map(|s| (s.key, s.count, s.rows.len()))
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        for s in &mut self.strata {
            s.take(&mut self.rng, &mut batch);
        }
        batch
    }

    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        (0..self.batches_per_epoch).map(|_| self.next_batch()).collect()
    }
}

/// Row indices of every batch in the first epoch of `plan`.
pub fn make_batches(fraud: &[bool], golden: &[bool], plan: &BatchPlan) -> Result<Vec<Vec<usize>>> {
    Ok(BatchSampler::new(fraud, golden, plan)?.epoch())
}
