//! Supervised, two-stage and hybrid learning on the desk-scale benchmark for one seed.
//!
//!     cargo run --release --example strategies -- [seed]

use cbx::eval::EvalReport;
use cbx::experiment::benchmark::{run_benchmark, BenchmarkConfig};

fn line(name: &str, r: &EvalReport) {
    println!(
        "{name:<24} recall@{:.0}%fpr {:.4}  (test fpr {:.4})  mAP {:.4}  concept jaccard {:.4}",
        100.0 * r.fpr_target,
        r.recall_at_fpr,
        r.realized_fpr,
        r.map,
        r.concept_jaccard
    );
}

fn main() -> cbx::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let start = std::time::Instant::now();
    let r = run_benchmark(seed, &BenchmarkConfig::default())?;
    line("supervised", &r.supervised);
    line("pre-trained base", &r.pretrained);
    line("two-stage", &r.two_stage);
    line("hybrid", &r.hybrid);
    for (fraction, report) in &r.hybrid_finetune {
        line(&format!("two-stage, hybrid ft {fraction}"), report);
    }
    println!("seed {seed} in {:.1?}", start.elapsed());
    Ok(())
}
