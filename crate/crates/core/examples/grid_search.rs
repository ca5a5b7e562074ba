//! Run a small hyperparameter grid, select Pareto-optimal models and plot the trade-off.
//!
//!     cargo run --release --example grid_search -- [out_dir]

use cbx::experiment::{emit_tradeoff_plot, run_grid, ExperimentConfig};
use cbx::synth::generate;

fn main() -> cbx::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "grid-example".into());
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/small_grid.cfg"))?;
    let ds = generate(&cfg.gen)?.data;
    let grid = run_grid(&ds, &cfg.grid, &cfg.strategy, cfg.fpr_target, 4, Some(out.as_ref()))?;

    let mut records = grid.records;
    records.sort_by(|a, b| a.strategy.cmp(&b.strategy).then(a.run_id.cmp(&b.run_id)));
    for r in &records {
        println!(
            "{:<48} recall {:.3}  mAP {:.3}{}{}",
            r.run_id,
            r.report.recall_at_fpr,
            r.report.map,
            if r.report.pareto_member { "  front" } else { "" },
            if r.pareto_overall { " (overall)" } else { "" }
        );
    }
    let rows: Vec<_> = records.iter().map(|r| r.to_row()).collect();
    let svg = std::path::Path::new(&out).join("tradeoff.svg");
    emit_tradeoff_plot(&rows, &svg)?;
    println!("{} runs, {} failed, plot at {}", records.len(), grid.failures.len(), svg.display());
    Ok(())
}
