//! The three learning strategies and the stage loop they share.
//!
//! * fully supervised: golden concept labels only;
//! * two-stage: pre-train on every training row with noisy concept labels, then
//!   fine-tune on golden rows (optionally mixed with noisy ones), trunk optionally frozen;
//! * hybrid: from scratch, every batch mixes a fixed share of golden rows with noisy ones.

mod batches;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::dataset::{Dataset, Split, TransactionRecord};
use crate::model::{meta_loss, ConceptBottleneckModel, LossParts};
use crate::nn::{Activation, Matrix};
use crate::{Error, Result};

pub use batches::{make_batches, round_half_up, stratum_counts, BatchPlan, BatchSampler, StratumKey};
pub use trace::{traces_to_csv, EpochLoss, LossSplit, TrainingTrace};

/// Which concept vector a row trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceptSource {
    /// Golden concepts; records without them are rejected.
    Golden,
    /// Noisy concepts for every row.
    Noisy,
    /// Golden for golden-labelled records, noisy otherwise.
    Best,
}

/// Dense training arrays built from records.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub ids: Vec<u64>,
    pub x: Matrix,
    /// One-hot, column 1 = fraud.
    pub y_decision: Matrix,
    pub y_concepts: Matrix,
    /// Rows without a concept vector are excluded from the explain loss.
    pub concept_mask: Vec<bool>,
    pub fraud: Vec<bool>,
    /// Whether the row's concept target is a golden label.
    pub golden: Vec<bool>,
}

/// Rows selected for one step.
pub struct Batch {
    pub x: Matrix,
    pub y_decision: Matrix,
    pub y_concepts: Matrix,
    pub concept_mask: Vec<bool>,
}

impl TrainingSet {
    pub fn from_records(records: &[&TransactionRecord], concept_count: usize, source: ConceptSource) -> Result<Self> {
        let n = records.len();
        let d = records.first().map_or(0, |r| r.features.len());
        let mut x = Vec::with_capacity(n * d);
        let mut y_decision = Vec::with_capacity(n * 2);
        let mut y_concepts = Vec::with_capacity(n * concept_count);
        let mut concept_mask = Vec::with_capacity(n);
        let mut fraud = Vec::with_capacity(n);
        let mut golden = Vec::with_capacity(n);
        for r in records {
            if r.features.len() != d {
                return Err(Error::LengthMismatch {
                    left: d,
                    right: r.features.len(),
                });
            }
            x.extend_from_slice(&r.features);
            y_decision.extend_from_slice(if r.is_fraud() { &[0.0, 1.0] } else { &[1.0, 0.0] });
            let (target, is_golden) = match source {
                ConceptSource::Golden => match &r.golden_concepts {
                    Some(v) => (Some(v), true),
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "record {} has no golden concepts",
                            r.id
                        )))
                    }
                },
                ConceptSource::Noisy => (r.noisy_concepts.as_ref(), false),
                ConceptSource::Best if r.is_golden() => (r.golden_concepts.as_ref(), true),
                ConceptSource::Best => (r.noisy_concepts.as_ref(), false),
            };
            match target {
                Some(v) if v.len() == concept_count => y_concepts.extend(v.to_reals()),
                Some(v) => {
                    return Err(Error::LengthMismatch {
                        left: concept_count,
                        right: v.len(),
                    })
                }
                None => y_concepts.extend(std::iter::repeat_n(0.0, concept_count)),
            }
            concept_mask.push(target.is_some());
            fraud.push(r.is_fraud());
            golden.push(is_golden);
        }
        Ok(Self {
            ids: records.iter().map(|r| r.id).collect(),
            x: Matrix::from_vec(n, d, x)?,
            y_decision: Matrix::from_vec(n, 2, y_decision)?,
            y_concepts: Matrix::from_vec(n, concept_count, y_concepts)?,
            concept_mask,
            fraud,
            golden,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        Batch {
            x: self.x.select_rows(rows),
            y_decision: self.y_decision.select_rows(rows),
            y_concepts: self.y_concepts.select_rows(rows),
            concept_mask: rows.iter().map(|&i| self.concept_mask[i]).collect(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let b = self.batch(rows);
        Self {
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            x: b.x,
            y_decision: b.y_decision,
            y_concepts: b.y_concepts,
            concept_mask: b.concept_mask,
            fraud: rows.iter().map(|&i| self.fraud[i]).collect(),
            golden: rows.iter().map(|&i| self.golden[i]).collect(),
        }
    }

    pub fn golden_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.golden[i]).collect()
    }

    /// Meta-loss of `model` over the whole set.
    pub fn loss(&self, model: &ConceptBottleneckModel, alpha: f64) -> Result<LossParts> {
        let pred = model.predict(&self.x)?;
        meta_loss(&pred, &self.y_decision, &self.y_concepts, &self.concept_mask, alpha)
    }
}

/// Optimizer settings of one training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fixed fraud share per batch; `None` keeps the natural rate.
    pub fraud_prevalence: Option<f64>,
    pub shuffle_seed: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 100,
            fraud_prevalence: None,
            shuffle_seed: 0,
        }
    }
}

impl StageConfig {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("{name}.alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name}.learning_rate must be > 0")));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig(format!("{name}.batch_size must be >= 1")));
        }
        if let Some(p) = self.fraud_prevalence {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!("{name}.fraud_prevalence must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    fn plan(&self, golden_fraction: Option<f64>) -> BatchPlan {
        BatchPlan {
            batch_size: self.batch_size,
            fraud_prevalence: self.fraud_prevalence,
            golden_fraction,
            shuffle_seed: self.shuffle_seed,
        }
    }
}

/// Shared loop: epoch 0 holds the initial losses, every later row the losses after that
/// epoch's updates.
fn run_stage(
    model: &mut ConceptBottleneckModel,
    set: &TrainingSet,
    cfg: &StageConfig,
    golden_fraction: Option<f64>,
    freeze_trunk: bool,
    stage: &str,
    validation: Option<&TrainingSet>,
) -> Result<TrainingTrace> {
    cfg.validate(stage)?;
    if set.feature_dim() != model.input_dim() {
        return Err(Error::LayerDimension {
            layer: 0,
            expected: model.input_dim(),
            actual: set.feature_dim(),
        });
    }
    let start = Instant::now();
    let mut trace = TrainingTrace::new(stage);
    let record = |model: &ConceptBottleneckModel, epoch: usize, trace: &mut TrainingTrace| -> Result<()> {
        trace.push(epoch, LossSplit::Train, set.loss(model, cfg.alpha)?)?;
        if let Some(v) = validation {
            trace.push(epoch, LossSplit::Validation, v.loss(model, cfg.alpha)?)?;
        }
        Ok(())
    };
    record(model, 0, &mut trace)?;
    if cfg.epochs > 0 {
        let mut sampler = BatchSampler::new(&set.fraud, &set.golden, &cfg.plan(golden_fraction))?;
        for epoch in 1..=cfg.epochs {
            for rows in sampler.epoch() {
                let b = set.batch(&rows);
                model.train_step(
                    &b.x,
                    &b.y_decision,
                    &b.y_concepts,
                    &b.concept_mask,
                    cfg.alpha,
                    cfg.learning_rate,
                    freeze_trunk,
                )?;
            }
            record(model, epoch, &mut trace)?;
        }
    }
    trace.wall_time = start.elapsed();
    Ok(trace)
}

/// Baseline: golden concept labels only.
pub fn train_supervised(
    model: &mut ConceptBottleneckModel,
    golden: &TrainingSet,
    cfg: &StageConfig,
    validation: Option<&TrainingSet>,
) -> Result<TrainingTrace> {
    if golden.golden.iter().any(|g| !g) || golden.concept_mask.iter().any(|m| !m) {
        return Err(Error::InvalidConfig(
            "supervised training needs golden concept labels on every row".into(),
        ));
    }
    run_stage(model, golden, cfg, None, false, "supervised", validation)
}

/// First stage of two-stage learning: every row, noisy concept labels.
pub fn pretrain(
    model: &mut ConceptBottleneckModel,
    noisy: &TrainingSet,
    cfg: &StageConfig,
    validation: Option<&TrainingSet>,
) -> Result<TrainingTrace> {
    run_stage(model, noisy, cfg, None, false, "pretrain", validation)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinetuneMode {
    /// Golden rows only.
    PureGolden,
    /// Golden and noisy rows mixed at a fixed golden share.
    Hybrid { golden_fraction: f64 },
}

impl FinetuneMode {
    fn golden_fraction(self) -> f64 {
        match self {
            FinetuneMode::PureGolden => 1.0,
            FinetuneMode::Hybrid { golden_fraction } => golden_fraction,
        }
    }
}

impl fmt::Display for FinetuneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FinetuneMode::PureGolden => f.write_str("golden"),
            FinetuneMode::Hybrid { golden_fraction } => write!(f, "hybrid:{golden_fraction}"),
        }
    }
}

impl FromStr for FinetuneMode {
    type Err = Error;

    /// `golden` or `hybrid:<fraction>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "golden" => Ok(FinetuneMode::PureGolden),
            Some(("hybrid", frac)) => {
                let golden_fraction: f64 = frac
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad golden fraction '{frac}'")))?;
                if !(0.0..=1.0).contains(&golden_fraction) {
                    return Err(Error::InvalidConfig(format!(
                        "golden fraction must lie in [0, 1], got {golden_fraction}"
                    )));
                }
                Ok(FinetuneMode::Hybrid { golden_fraction })
            }
            _ => Err(Error::InvalidConfig(format!(
                "finetune mode must be 'golden' or 'hybrid:<fraction>', got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub stage: StageConfig,
    pub freeze_trunk: bool,
    pub mode: FinetuneMode,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            stage: StageConfig {
                learning_rate: 0.05,
                epochs: 20,
                batch_size: 50,
                ..StageConfig::default()
            },
            freeze_trunk: true,
            mode: FinetuneMode::PureGolden,
        }
    }
}

/// Second stage of two-stage learning. Continues from the current parameters; heads are
/// not re-initialized. `pool` holds the golden rows, plus noisy rows for hybrid mode.
pub fn fine_tune(
    model: &mut ConceptBottleneckModel,
    pool: &TrainingSet,
    cfg: &FinetuneConfig,
    validation: Option<&TrainingSet>,
) -> Result<TrainingTrace> {
    run_stage(
        model,
        pool,
        &cfg.stage,
        Some(cfg.mode.golden_fraction()),
        cfg.freeze_trunk,
        "finetune",
        validation,
    )
}

/// From-scratch training on batches with a fixed golden share.
pub fn train_hybrid(
    model: &mut ConceptBottleneckModel,
    pool: &TrainingSet,
    cfg: &StageConfig,
    golden_fraction: f64,
    validation: Option<&TrainingSet>,
) -> Result<TrainingTrace> {
    if !(0.0..=1.0).contains(&golden_fraction) {
        return Err(Error::InvalidConfig(format!(
            "golden_fraction must lie in [0, 1], got {golden_fraction}"
        )));
    }
    run_stage(model, pool, cfg, Some(golden_fraction), false, "hybrid", validation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    FullySupervised,
    TwoStage,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FullySupervised, Strategy::TwoStage, Strategy::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FullySupervised => "supervised",
            Strategy::TwoStage => "two-stage",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" | "fully-supervised" => Ok(Strategy::FullySupervised),
            "two-stage" => Ok(Strategy::TwoStage),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(Error::InvalidConfig(format!(
                "strategy must be supervised, two-stage or hybrid, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// The supervised run, the hybrid run, or the pre-training stage.
    pub stage: StageConfig,
    /// Golden share per batch for the hybrid strategy.
    pub golden_fraction: f64,
    /// Second stage of the two-stage strategy.
    pub finetune: FinetuneConfig,
    /// Drives model initialization and every batch shuffle.
    pub seed: u64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::FullySupervised,
            hidden: vec![32],
            hidden_activation: Activation::ReLU,
            stage: StageConfig::default(),
            golden_fraction: 0.1,
            finetune: FinetuneConfig::default(),
            seed: 0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage.validate("train")?;
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("train.hidden widths must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.golden_fraction) {
            return Err(Error::InvalidConfig("train.golden_fraction must lie in [0, 1]".into()));
        }
        if self.strategy == Strategy::TwoStage {
            self.finetune.stage.validate("finetune")?;
            if self.finetune.stage.epochs == 0 {
                return Err(Error::InvalidConfig("finetune.epochs must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Label for result tables: layers joined by `x`, e.g. `64x32`.
    pub fn layers_label(&self) -> String {
        if self.hidden.is_empty() {
            "none".into()
        } else {
            self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
        }
    }
}

/// SplitMix64 finalizer; derives independent seeds from one master seed.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Arrays every strategy draws from, built once per dataset.
#[derive(Debug, Clone)]
pub struct StrategyData {
    pub concept_names: Vec<String>,
    /// Golden training rows with golden concepts.
    pub golden: TrainingSet,
    /// Every training row with noisy concepts.
    pub noisy: TrainingSet,
    /// Every training row, golden concepts where available.
    pub mixed: TrainingSet,
    /// Validation split with golden concepts, for loss curves.
    pub validation: Option<TrainingSet>,
}

impl StrategyData {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let k = ds.taxonomy.len();
        let train: Vec<&TransactionRecord> = ds.split(Split::Train).collect();
        let mixed = TrainingSet::from_records(&train, k, ConceptSource::Best)?;
        let golden = mixed.subset(&mixed.golden_rows());
        let noisy = TrainingSet::from_records(&train, k, ConceptSource::Noisy)?;
        let val: Vec<&TransactionRecord> = ds.split(Split::Validation).collect();
        let validation = if val.is_empty() {
            None
        } else {
            Some(TrainingSet::from_records(&val, k, ConceptSource::Golden)?)
        };
        Ok(Self {
            concept_names: ds.taxonomy.names().to_vec(),
            golden,
            noisy,
            mixed,
            validation,
        })
    }
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub model: ConceptBottleneckModel,
    /// Base model of the two-stage strategy.
    pub pretrained: Option<ConceptBottleneckModel>,
    pub traces: Vec<TrainingTrace>,
}

impl StrategyConfig {
    /// Freshly initialized model for `data`.
    pub fn init_model(&self, data: &StrategyData) -> Result<ConceptBottleneckModel> {
        ConceptBottleneckModel::new(
            data.mixed.feature_dim(),
            &self.hidden,
            self.hidden_activation,
            data.concept_names.clone(),
            2,
            mix_seed(self.seed, 0),
        )
    }

    /// First (or only) stage with its shuffle seed derived from `seed`.
    pub fn main_stage(&self) -> StageConfig {
        StageConfig {
            shuffle_seed: mix_seed(self.seed, 1),
            ..self.stage.clone()
        }
    }

    /// Fine-tuning stage with its shuffle seed derived from `seed`.
    pub fn finetune_stage(&self) -> FinetuneConfig {
        FinetuneConfig {
            stage: StageConfig {
                shuffle_seed: mix_seed(self.seed, 2),
                ..self.finetune.stage.clone()
            },
            ..self.finetune.clone()
        }
    }
}

/// Builds a fresh model and trains it with `cfg.strategy`.
pub fn run_strategy(cfg: &StrategyConfig, data: &StrategyData) -> Result<StrategyOutcome> {
    cfg.validate()?;
    let mut model = cfg.init_model(data)?;
    let stage = cfg.main_stage();
    let val = data.validation.as_ref();
    let (pretrained, traces) = match cfg.strategy {
        Strategy::FullySupervised => (None, vec![train_supervised(&mut model, &data.golden, &stage, val)?]),
        Strategy::Hybrid => (
            None,
            vec![train_hybrid(&mut model, &data.mixed, &stage, cfg.golden_fraction, val)?],
        ),
        Strategy::TwoStage => {
            let first = pretrain(&mut model, &data.noisy, &stage, val)?;
            let base = model.clone();
            let second = fine_tune(&mut model, &data.mixed, &cfg.finetune_stage(), val)?;
            (Some(base), vec![first, second])
        }
    };
    Ok(StrategyOutcome {
        model,
        pretrained,
        traces,
    })
}
