#![allow(dead_code)]

use cbx::synth::GenConfig;

/// A generator config small enough for debug-speed tests.
pub fn small_gen(seed: u64) -> GenConfig {
    GenConfig {
        n_total: 6_000,
        validation_size: 1_000,
        test_size: 1_000,
        golden_subset_size: 300,
        prevalence: cbx::synth::SplitPrevalence {
            train: 0.05,
            validation: 0.05,
            test: 0.05,
        },
        seed,
        ..GenConfig::default()
    }
}

pub fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

pub mod oracles;
