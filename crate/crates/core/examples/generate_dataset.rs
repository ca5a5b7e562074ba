//! Generate the default synthetic fraud dataset and print its calibration and statistics.
//!
//!     cargo run --release --example generate_dataset -- [seed] [out_dir]

use cbx::dataset::Split;
use cbx::synth::{generate, report, save_dataset, GenConfig};

fn main() -> cbx::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = GenConfig::benchmark(seed);
    let start = std::time::Instant::now();
    let ds = generate(&cfg)?;
    println!("generated {} records in {:.2?}", ds.data.records.len(), start.elapsed());

    let c = &ds.calibration;
    println!(
        "noise level {:.4}: miss {:.3}, false fire {:.4}, extra concept {:.3}",
        c.noise_level, c.miss_rate, c.false_fire_rate, c.extra_concept_prob
    );
    println!("population jaccard {:.4}, probe auc {:?}", c.population_jaccard, c.probe_auc);

    let stats = report(&ds.data);
    for split in Split::ALL {
        let s = stats.split(split);
        println!(
            "{:<10} size {:>6}  fraud {:>5}  prevalence {:.4}  golden {:>5}",
            split.name(),
            s.size,
            s.fraud,
            s.prevalence.unwrap_or(f64::NAN),
            s.golden
        );
    }
    println!(
        "golden train subset {} ({:.3} fraud), jaccard mean {:.4} median {:.4} over {} records",
        stats.golden_train_size,
        stats.golden_train_fraud_fraction.unwrap_or(f64::NAN),
        stats.mean_jaccard.unwrap_or(f64::NAN),
        stats.median_jaccard.unwrap_or(f64::NAN),
        stats.jaccard_records
    );
    for (name, rate) in ds.data.taxonomy.names().iter().zip(&stats.golden_concept_rates) {
        println!("  {name:<28} {:.3}", rate.unwrap_or(f64::NAN));
    }

    if let Some(dir) = args.next() {
        let paths = save_dataset(&dir, &ds)?;
        println!("wrote {}", paths.dir.display());
    }
    Ok(())
}
