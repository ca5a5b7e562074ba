use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cbx::dataset::{write_records, Dataset};
use cbx::eval::{evaluate, EvalSets};
use cbx::experiment::{
    emit_tradeoff_plot, read_results, run_grid, select_pareto_rows, write_results, write_run_dir,
    ExperimentConfig, RunFiles, RunRecord,
};
use cbx::model::ConceptBottleneckModel;
use cbx::synth::{generate, load_dataset, report, save_dataset};
use cbx::training::{run_strategy, Strategy, StrategyData};
use cbx::weak_labels::{
    annotate_dataset, load_rule_map, load_taxonomy, save_rule_map, save_taxonomy, UnknownRulePolicy,
};

#[derive(Parser)]
#[command(name = "cbx", version, about = "Concept-bottleneck training with distant supervision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; defaults apply to keys it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Recompute noisy concept labels of a dataset from a rule map.
    Annotate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        /// Defaults to the dataset's own taxonomy.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Fail on rule ids missing from the map instead of skipping them.
        #[arg(long)]
        strict: bool,
        /// Defaults to rewriting `--data` in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one strategy and write a run directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; generated from the `gen.*` keys when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: validation threshold, test metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the hyperparameter grid.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "grid")]
        out: PathBuf,
    },
    /// Recompute per-strategy Pareto membership of a results file in place.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: PathBuf,
    },
    /// Draw the recall / mAP trade-off of a results file as SVG.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "tradeoff.svg")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> cbx::Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn dataset(cfg: &ExperimentConfig, data: Option<&Path>) -> cbx::Result<Dataset> {
    match data {
        Some(dir) => Ok(load_dataset(dir)?.0),
        None => Ok(generate(&cfg.gen)?.data),
    }
}

fn run(command: Command) -> cbx::Result<serde_json::Value> {
    match command {
        Command::GenData { common, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.gen.seed = seed;
            }
            let ds = generate(&cfg.gen)?;
            save_dataset(&out, &ds)?;
            let stats = report(&ds.data);
            Ok(json!({
                "command": "gen-data",
                "dir": out,
                "seed": cfg.gen.seed,
                "records": ds.data.records.len(),
                "golden_train": stats.golden_train_size,
                "noise_level": ds.calibration.noise_level,
                "population_jaccard": ds.calibration.population_jaccard,
                "probe_auc": ds.calibration.probe_auc,
            }))
        }
        Command::Annotate {
            common,
            data,
            rules,
            taxonomy,
            strict,
            out,
        } => {
            load_config(&common)?;
            let (mut ds, _) = load_dataset(&data)?;
            if let Some(path) = &taxonomy {
                let t = load_taxonomy(path)?;
                if t != ds.taxonomy {
                    return Err(cbx::Error::Taxonomy(
                        "taxonomy differs from the dataset's concept list".into(),
                    ));
                }
            }
            let map = load_rule_map(&rules, &ds.taxonomy)?;
            let policy = if strict {
                UnknownRulePolicy::Strict
            } else {
                UnknownRulePolicy::Skip
            };
            let summary = annotate_dataset(&mut ds.records, &map, &ds.taxonomy, policy)?;
            let out = out.unwrap_or(data);
            std::fs::create_dir_all(&out).map_err(|e| cbx::Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_records(out.join("dataset.jsonl"), &ds.records, &ds.taxonomy)?;
            save_rule_map(out.join("rules.txt"), &map, &ds.taxonomy)?;
            save_taxonomy(out.join("taxonomy.txt"), &ds.taxonomy)?;
            Ok(json!({
                "command": "annotate",
                "dir": out,
                "records": summary.records,
                "golden_records": summary.golden_records,
                "records_without_rules": summary.records_without_rules,
                "unknown_rule_hits": summary.unknown_rule_hits,
            }))
        }
        Command::Train {
            common,
            data,
            strategy,
            out,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.strategy.seed = seed;
            }
            if let Some(s) = strategy {
                cfg.strategy.strategy = s;
            }
            cfg.validate()?;
            let ds = dataset(&cfg, data.as_deref())?;
            let outcome = run_strategy(&cfg.strategy, &StrategyData::from_dataset(&ds)?)?;
            let report = evaluate(&outcome.model, &EvalSets::from_dataset(&ds)?, cfg.fpr_target)?;
            let record = RunRecord {
                run_id: out.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned()),
                strategy: cfg.strategy.strategy.to_string(),
                replicate: cfg.strategy.seed,
                config: cfg.strategy.clone(),
                base_run: None,
                report,
                pareto_overall: false,
                dir: Some(out.clone()),
                wall_time: outcome.traces.iter().map(|t| t.wall_time).sum(),
            };
            write_run_dir(
                &out,
                &RunFiles {
                    config: &cfg.strategy,
                    fpr_target: cfg.fpr_target,
                    traces: &outcome.traces,
                    pretrained: outcome.pretrained.as_ref(),
                    model: &outcome.model,
                    row: &record.to_row(),
                },
            )?;
            Ok(json!({
                "command": "train",
                "dir": out,
                "strategy": record.strategy,
                "seed": cfg.strategy.seed,
                "recall_at_fpr": record.report.recall_at_fpr,
                "map": record.report.map,
                "wall_seconds": record.wall_time.as_secs_f64(),
            }))
        }
        Command::Evaluate {
            common,
            data,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            let (ds, _) = load_dataset(&data)?;
            let model = ConceptBottleneckModel::load(&checkpoint)?;
            let r = evaluate(&model, &EvalSets::from_dataset(&ds)?, cfg.fpr_target)?;
            Ok(json!({
                "command": "evaluate",
                "checkpoint": checkpoint,
                "fpr_target": r.fpr_target,
                "threshold": if r.threshold.is_finite() { json!(r.threshold) } else { json!("inf") },
                "recall_at_fpr": r.recall_at_fpr,
                "realized_fpr": r.realized_fpr,
                "map": r.map,
                "per_concept_ap": r.per_concept_ap,
                "excluded_concepts": r.concepts_excluded,
                "concept_jaccard": r.concept_jaccard,
            }))
        }
        Command::Grid { common, data, out } => {
            let cfg = load_config(&common)?;
            let master = common.seed.unwrap_or(0);
            let ds = dataset(&cfg, data.as_deref())?;
            let outcome = run_grid(&ds, &cfg.grid, &cfg.strategy, cfg.fpr_target, master, Some(&out))?;
            Ok(json!({
                "command": "grid",
                "dir": out,
                "seed": master,
                "runs": outcome.records.len(),
                "resumed": outcome.resumed,
                "failures": outcome.failures.len(),
                "pareto_overall": outcome.records.iter().filter(|r| r.pareto_overall).map(|r| &r.run_id).collect::<Vec<_>>(),
            }))
        }
        Command::Pareto { common, results } => {
            load_config(&common)?;
            let mut rows = read_results(&results)?;
            select_pareto_rows(&mut rows);
            write_results(&results, &rows)?;
            Ok(json!({
                "command": "pareto",
                "results": results,
                "runs": rows.len(),
                "front": rows.iter().filter(|r| r.pareto).map(|r| &r.model_id).collect::<Vec<_>>(),
            }))
        }
        Command::Plot { common, results, out } => {
            load_config(&common)?;
            let rows = read_results(&results)?;
            emit_tradeoff_plot(&rows, &out)?;
            Ok(json!({
                "command": "plot",
                "out": out,
                "points": rows.len(),
                "front_points": rows.iter().filter(|r| r.pareto).count(),
            }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
