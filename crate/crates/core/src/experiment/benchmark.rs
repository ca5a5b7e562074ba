//! Head-to-head comparison of the three strategies on the desk-scale synthetic benchmark.
//!
//! Every strategy shares the trunk, the meta-loss weight, the learning rate and the 37%
//! batch fraud prevalence. The supervised baseline gets as many SGD steps as
//! pre-training so neither side wins on compute alone.

use crate::eval::{evaluate, EvalReport, EvalSets};
use crate::synth::{generate, GenConfig};
use crate::training::{
    run_strategy, FinetuneConfig, FinetuneMode, StageConfig, Strategy, StrategyConfig, StrategyData,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub fraud_prevalence: f64,
    pub pretrain_epochs: usize,
    /// `None` matches the SGD step count of pre-training.
    pub supervised_epochs: Option<usize>,
    pub hybrid_golden_fraction: f64,
    pub finetune: FinetuneConfig,
    /// Golden shares tried for hybrid fine-tuning.
    pub finetune_fractions: Vec<f64>,
    pub fpr_target: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            alpha: 0.5,
            learning_rate: 0.1,
            batch_size: 100,
            fraud_prevalence: 0.37,
            pretrain_epochs: 10,
            supervised_epochs: None,
            hybrid_golden_fraction: 0.1,
            finetune: FinetuneConfig {
                stage: StageConfig {
                    alpha: 0.5,
                    learning_rate: 0.05,
                    epochs: 20,
                    batch_size: 50,
                    fraud_prevalence: None,
                    shuffle_seed: 0,
                },
                freeze_trunk: true,
                mode: FinetuneMode::PureGolden,
            },
            finetune_fractions: vec![0.1, 0.5],
            fpr_target: 0.05,
        }
    }
}

/// Test-set reports of one benchmark seed.
#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub seed: u64,
    pub supervised: EvalReport,
    /// Two-stage base model before fine-tuning.
    pub pretrained: EvalReport,
    /// Two-stage: pre-trained, then fine-tuned on golden batches.
    pub two_stage: EvalReport,
    pub hybrid: EvalReport,
    /// `(golden fraction, report)` of two-stage runs fine-tuned on hybrid batches.
    pub hybrid_finetune: Vec<(f64, EvalReport)>,
}

pub fn run_benchmark(seed: u64, cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let ds = generate(&GenConfig::benchmark(seed))?.data;
    run_benchmark_on(&StrategyData::from_dataset(&ds)?, &EvalSets::from_dataset(&ds)?, seed, cfg)
}

pub fn run_benchmark_on(
    data: &StrategyData,
    sets: &EvalSets,
    seed: u64,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkResult> {
    let stage = StageConfig {
        alpha: cfg.alpha,
        learning_rate: cfg.learning_rate,
        epochs: cfg.pretrain_epochs,
        batch_size: cfg.batch_size,
        fraud_prevalence: Some(cfg.fraud_prevalence),
        shuffle_seed: 0,
    };
    let base = StrategyConfig {
        strategy: Strategy::FullySupervised,
        hidden: cfg.hidden.clone(),
        stage: stage.clone(),
        golden_fraction: cfg.hybrid_golden_fraction,
        finetune: cfg.finetune.clone(),
        seed,
        ..StrategyConfig::default()
    };

    let pretrain_steps = cfg.pretrain_epochs * (data.noisy.len() / cfg.batch_size);
    let golden_batches = (data.golden.len() / cfg.batch_size).max(1);
    let supervised_epochs = cfg
        .supervised_epochs
        .unwrap_or_else(|| pretrain_steps.div_ceil(golden_batches));
    let supervised = run_strategy(
        &StrategyConfig {
            stage: StageConfig {
                epochs: supervised_epochs,
                ..stage.clone()
            },
            ..base.clone()
        },
        data,
    )?;

    let two = run_strategy(
        &StrategyConfig {
            strategy: Strategy::TwoStage,
            ..base.clone()
        },
        data,
    )?;
    let pretrained = two.pretrained.as_ref().expect("two-stage keeps its base");

    let hybrid = run_strategy(
        &StrategyConfig {
            strategy: Strategy::Hybrid,
            ..base.clone()
        },
        data,
    )?;

    let mut hybrid_finetune = Vec::new();
    for &fraction in &cfg.finetune_fractions {
        let mut ft = cfg.finetune.clone();
        ft.mode = FinetuneMode::Hybrid {
            golden_fraction: fraction,
        };
        let out = run_strategy(
            &StrategyConfig {
                strategy: Strategy::TwoStage,
                finetune: ft,
                ..base.clone()
            },
            data,
        )?;
        hybrid_finetune.push((fraction, evaluate(&out.model, sets, cfg.fpr_target)?));
    }

    Ok(BenchmarkResult {
        seed,
        supervised: evaluate(&supervised.model, sets, cfg.fpr_target)?,
        pretrained: evaluate(pretrained, sets, cfg.fpr_target)?,
        two_stage: evaluate(&two.model, sets, cfg.fpr_target)?,
        hybrid: evaluate(&hybrid.model, sets, cfg.fpr_target)?,
        hybrid_finetune,
    })
}
