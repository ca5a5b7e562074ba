//! Training strategies, batch composition and stage contracts.

mod common;

use std::collections::HashSet;

use cbx::dataset::TransactionRecord;
use cbx::synth::{generate, GenConfig};
use cbx::training::{
    fine_tune, make_batches, pretrain, run_strategy, stratum_counts, train_hybrid, train_supervised,
    BatchPlan, BatchSampler, ConceptSource, FinetuneConfig, LossSplit, StageConfig, Strategy,
    StrategyConfig, StrategyData, TrainingSet,
};
use cbx::Error;
use common::small_gen;
use proptest::prelude::*;

fn quick_stage(epochs: usize) -> StageConfig {
    StageConfig {
        epochs,
        batch_size: 50,
        fraud_prevalence: Some(0.37),
        ..StageConfig::default()
    }
}

fn quick_config(strategy: Strategy, seed: u64) -> StrategyConfig {
    StrategyConfig {
        strategy,
        hidden: vec![8],
        stage: quick_stage(2),
        finetune: FinetuneConfig {
            stage: StageConfig {
                epochs: 3,
                ..FinetuneConfig::default().stage
            },
            ..FinetuneConfig::default()
        },
        seed,
        ..StrategyConfig::default()
    }
}

fn data(seed: u64) -> StrategyData {
    StrategyData::from_dataset(&generate(&small_gen(seed)).unwrap().data).unwrap()
}

#[test]
fn frozen_fine_tuning_keeps_trunk_bytes() {
    let data = data(1);
    let out = run_strategy(&quick_config(Strategy::TwoStage, 3), &data).unwrap();
    let base = out.pretrained.unwrap();
    assert_eq!(out.model.trunk_bits(), base.trunk_bits());
    assert_ne!(out.model.explain_head(), base.explain_head());

    let mut unfrozen = quick_config(Strategy::TwoStage, 3);
    unfrozen.finetune.freeze_trunk = false;
    let out = run_strategy(&unfrozen, &data).unwrap();
    assert_ne!(out.model.trunk_bits(), out.pretrained.unwrap().trunk_bits());
}

#[test]
fn hybrid_with_only_golden_rows_is_supervised_training() {
    let data = data(2);
    let supervised = run_strategy(&quick_config(Strategy::FullySupervised, 7), &data).unwrap();
    let mut cfg = quick_config(Strategy::Hybrid, 7);
    cfg.golden_fraction = 1.0;
    let hybrid = run_strategy(&cfg, &data).unwrap();
    assert_eq!(hybrid.model.to_checkpoint_string(), supervised.model.to_checkpoint_string());
}

#[test]
fn noiseless_pretraining_is_supervised_training() {
    let ds = generate(&GenConfig {
        noise_target_jaccard: 1.0,
        ..small_gen(3)
    })
    .unwrap()
    .data;
    let golden = ds.golden_train();
    let k = ds.taxonomy.len();
    let golden_set = TrainingSet::from_records(&golden, k, ConceptSource::Golden).unwrap();
    let noisy_set = TrainingSet::from_records(&golden, k, ConceptSource::Noisy).unwrap();
    assert_eq!(golden_set.y_concepts, noisy_set.y_concepts);

    let cfg = StrategyConfig {
        hidden: vec![8],
        ..StrategyConfig::default()
    };
    let data = StrategyData::from_dataset(&ds).unwrap();
    let stage = StageConfig {
        shuffle_seed: 11,
        ..quick_stage(3)
    };
    let mut a = cfg.init_model(&data).unwrap();
    let mut b = a.clone();
    train_supervised(&mut a, &golden_set, &stage, None).unwrap();
    pretrain(&mut b, &noisy_set, &stage, None).unwrap();
    assert_eq!(a.to_checkpoint_string(), b.to_checkpoint_string());
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let data = data(4);
    let cfg = quick_config(Strategy::FullySupervised, 1);
    let mut model = cfg.init_model(&data).unwrap();
    let before = model.clone();
    let trace = train_supervised(&mut model, &data.golden, &quick_stage(0), data.validation.as_ref()).unwrap();
    assert_eq!(model, before);
    assert_eq!(trace.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), [0, 0]);
}

#[test]
fn one_small_step_on_one_batch_lowers_its_loss() {
    let data = data(5);
    let cfg = quick_config(Strategy::FullySupervised, 2);
    let mut model = cfg.init_model(&data).unwrap();
    let b = data.golden.batch(&(0..40).collect::<Vec<_>>());
    let before = model
        .train_step(&b.x, &b.y_decision, &b.y_concepts, &b.concept_mask, 0.5, 1e-3, false)
        .unwrap();
    let after = model.train_step(&b.x, &b.y_decision, &b.y_concepts, &b.concept_mask, 0.5, 0.0, false).unwrap();
    assert!(after.total < before.total, "{} -> {}", before.total, after.total);
}

#[test]
fn strategies_are_deterministic_and_traced() {
    let data = data(6);
    for strategy in Strategy::ALL {
        let cfg = quick_config(strategy, 21);
        let a = run_strategy(&cfg, &data).unwrap();
        let b = run_strategy(&cfg, &data).unwrap();
        assert_eq!(a.model.to_checkpoint_string(), b.model.to_checkpoint_string(), "{strategy}");
        let expected_stages = if strategy == Strategy::TwoStage { 2 } else { 1 };
        assert_eq!(a.traces.len(), expected_stages);
        let main = &a.traces[0];
        let train_epochs: Vec<usize> = main.epochs.iter().filter(|e| e.split == LossSplit::Train).map(|e| e.epoch).collect();
        assert_eq!(train_epochs, [0, 1, 2]);
        assert_eq!(main.losses(LossSplit::Validation).count(), 3);
    }
}

#[test]
fn hybrid_and_fine_tune_validate_their_inputs() {
    let data = data(7);
    let cfg = quick_config(Strategy::Hybrid, 1);
    let mut model = cfg.init_model(&data).unwrap();
    assert!(train_hybrid(&mut model, &data.mixed, &quick_stage(1), 1.5, None).is_err());
    assert!(train_supervised(&mut model, &data.noisy, &quick_stage(1), None).is_err());
    let too_big = StageConfig {
        batch_size: 100_000,
        ..quick_stage(1)
    };
    let ft = FinetuneConfig {
        stage: too_big,
        ..FinetuneConfig::default()
    };
    assert!(matches!(
        fine_tune(&mut model, &data.mixed, &ft, None),
        Err(Error::StratumExhausted { .. }) | Err(Error::InvalidConfig(_))
    ));
}

fn pool(n: usize, fraud_every: usize, golden_every: usize) -> (Vec<bool>, Vec<bool>) {
    ((0..n).map(|i| i % fraud_every == 0).collect(), (0..n).map(|i| i % golden_every == 1).collect())
}

#[test]
fn batches_hold_exact_fraud_and_golden_counts() {
    let (fraud, golden) = pool(20_000, 3, 7);
    let plan = BatchPlan::new(100, 9).with_fraud_prevalence(0.37).with_golden_fraction(0.1);
    let mut sampler = BatchSampler::new(&fraud, &golden, &plan).unwrap();
    for _ in 0..1000 {
        let batch = sampler.next_batch();
        assert_eq!(batch.len(), 100);
        assert_eq!(batch.iter().filter(|&&i| fraud[i]).count(), 37);
        assert_eq!(batch.iter().filter(|&&i| golden[i]).count(), 10);
        assert_eq!(batch.iter().collect::<HashSet<_>>().len(), 100);
    }
}

proptest! {
    #[test]
    fn composition_matches_rounded_marginals(
        b in 2usize..120,
        p in 0.01f64..0.99,
        gf in prop::option::of(0.01f64..0.99),
        seed in any::<u64>(),
    ) {
        let counts = stratum_counts(b, Some(p), gf);
        let total: usize = counts.values().sum();
        prop_assert_eq!(total, b);
        let fraud: usize = counts.iter().filter(|(k, _)| k.fraud == Some(true)).map(|(_, c)| c).sum();
        prop_assert_eq!(fraud, (b as f64 * p + 0.5 + 1e-9).floor() as usize);
        if let Some(gf) = gf {
            let golden: usize = counts.iter().filter(|(k, _)| k.golden == Some(true)).map(|(_, c)| c).sum();
            prop_assert_eq!(golden, (b as f64 * gf + 0.5 + 1e-9).floor() as usize);
        }

        let (fraud_rows, golden_rows) = pool(12 * b + 400, 2, 3);
        let mut plan = BatchPlan::new(b, seed).with_fraud_prevalence(p);
        if let Some(gf) = gf {
            plan = plan.with_golden_fraction(gf);
        }
        for batch in make_batches(&fraud_rows, &golden_rows, &plan).unwrap() {
            prop_assert_eq!(batch.iter().filter(|&&i| fraud_rows[i]).count(), fraud);
            prop_assert_eq!(batch.iter().collect::<HashSet<_>>().len(), b);
        }
    }

    #[test]
    fn strata_are_permuted_before_any_row_repeats(seed in any::<u64>(), n in 20usize..200) {
        let (fraud, golden) = pool(n, 4, 3);
        let plan = BatchPlan::new(10, seed).with_fraud_prevalence(0.3);
        let mut sampler = BatchSampler::new(&fraud, &golden, &plan).unwrap();
        let sizes: Vec<usize> = sampler.strata().map(|(_, _, available)| available).collect();
        let fraud_pool = sizes[1];
        let mut seen = Vec::new();
        for _ in 0..3 {
            for batch in sampler.epoch() {
                seen.extend(batch.into_iter().filter(|&i| fraud[i]));
            }
        }
        for chunk in seen.chunks(fraud_pool).filter(|c| c.len() == fraud_pool) {
            prop_assert_eq!(chunk.iter().collect::<HashSet<_>>().len(), fraud_pool);
        }
    }
}

#[test]
fn small_strata_report_exhaustion() {
    let fraud = [true, false, false, false];
    let plan = BatchPlan::new(4, 0).with_fraud_prevalence(0.5);
    match BatchSampler::new(&fraud, &[false; 4], &plan) {
        Err(Error::StratumExhausted { available, needed, .. }) => assert_eq!((available, needed), (1, 2)),
        other => panic!("expected exhaustion, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn records_without_golden_concepts_are_rejected_for_golden_sets() {
    let ds = generate(&small_gen(8)).unwrap().data;
    let noisy: Vec<&TransactionRecord> = ds.noisy_train().into_iter().take(5).collect();
    assert!(TrainingSet::from_records(&noisy, ds.taxonomy.len(), ConceptSource::Golden).is_err());
}
