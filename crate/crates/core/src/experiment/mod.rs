//! Grid orchestration, run directories, result tables, Pareto selection and plots.
//!
//! A run directory holds:
//!
//! ```text
//! runs/<run_id>/config        train.* / finetune.* keys of the run
//!               trace.csv     per-epoch losses
//!               pretrain.ckpt base model (two-stage runs)
//!               final.ckpt
//!               report.csv    one results row, written last
//! ```

pub mod benchmark;
mod config;
mod grid;
mod plot;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::eval::{pareto_front, EvalReport};
use crate::model::ConceptBottleneckModel;
use crate::training::{traces_to_csv, StrategyConfig, TrainingTrace};
use crate::{Error, Result};

pub use config::{
    format_layers, grid_config_text, parse_layers, strategy_config_text, ConfigFile, ExperimentConfig,
};
pub use grid::{run_grid, CellFailure, GridOutcome, GridSpec};
pub use plot::{emit_tradeoff_plot, render_tradeoff_svg};

/// One trained and evaluated model.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    /// `supervised`, `hybrid`, `pretrain` (two-stage base) or `two-stage` (fine-tuned).
    pub strategy: String,
    pub replicate: u64,
    pub config: StrategyConfig,
    /// Base run a fine-tuned model started from.
    pub base_run: Option<String>,
    /// Test-set metrics; `pareto_member` is the per-strategy front.
    pub report: EvalReport,
    pub pareto_overall: bool,
    pub dir: Option<PathBuf>,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn to_row(&self) -> ResultRow {
        ResultRow {
            model_id: self.run_id.clone(),
            seed: self.config.seed,
            strategy: self.strategy.clone(),
            alpha: self.config.stage.alpha,
            lr: self.config.stage.learning_rate,
            layers: self.config.layers_label(),
            recall_at_fpr: self.report.recall_at_fpr,
            realized_fpr: self.report.realized_fpr,
            threshold: self.report.threshold,
            map: self.report.map,
            excluded_concepts: self.report.concepts_excluded,
            pareto: self.report.pareto_member,
        }
    }
}

/// One line of `results.csv` / `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model_id: String,
    pub seed: u64,
    pub strategy: String,
    pub alpha: f64,
    pub lr: f64,
    pub layers: String,
    pub recall_at_fpr: f64,
    pub realized_fpr: f64,
    pub threshold: f64,
    pub map: f64,
    pub excluded_concepts: usize,
    pub pareto: bool,
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::parse(path.display(), 0, e);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record([
            "model_id",
            "seed",
            "strategy",
            "alpha",
            "lr",
            "layers",
            "recall_at_fpr",
            "realized_fpr",
            "threshold",
            "map",
            "excluded_concepts",
            "pareto",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display(), 0, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path.display(), i + 2, e)))
        .collect()
}

/// Marks front members on (recall@FPR, mAP): per strategy in `report.pareto_member`,
/// across all runs in `pareto_overall`.
pub fn select_pareto(records: &mut [RunRecord]) {
    let points: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.report.recall_at_fpr, r.report.map))
        .collect();
    for (r, on) in records.iter_mut().zip(pareto_front(&points)) {
        r.pareto_overall = on;
    }
    let mut strategies: Vec<String> = records.iter().map(|r| r.strategy.clone()).collect();
    strategies.sort();
    strategies.dedup();
    for s in strategies {
        let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].strategy == s).collect();
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| points[i]).collect();
        for (&i, on) in idx.iter().zip(pareto_front(&pts)) {
            records[i].report.pareto_member = on;
        }
    }
}

/// Same selection on rows read back from a results file.
pub fn select_pareto_rows(rows: &mut [ResultRow]) {
    let mut strategies: Vec<String> = rows.iter().map(|r| r.strategy.clone()).collect();
    strategies.sort();
    strategies.dedup();
    for s in strategies {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].strategy == s).collect();
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (rows[i].recall_at_fpr, rows[i].map)).collect();
        for (&i, on) in idx.iter().zip(pareto_front(&pts)) {
            rows[i].pareto = on;
        }
    }
}

/// Files of one run directory.
pub struct RunFiles<'a> {
    pub config: &'a StrategyConfig,
    pub fpr_target: f64,
    pub traces: &'a [TrainingTrace],
    pub pretrained: Option<&'a ConceptBottleneckModel>,
    pub model: &'a ConceptBottleneckModel,
    pub row: &'a ResultRow,
}

pub fn write_run_dir(dir: &Path, files: &RunFiles<'_>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("config", strategy_config_text(files.config, files.fpr_target))?;
    write("trace.csv", traces_to_csv(files.traces))?;
    if let Some(base) = files.pretrained {
        base.save(dir.join("pretrain.ckpt"))?;
    }
    files.model.save(dir.join("final.ckpt"))?;
    write_results(dir.join("report.csv"), std::slice::from_ref(files.row))
}

/// A run directory counts as complete when its report names the run and its final
/// checkpoint loads.
pub fn load_completed_run(dir: &Path, run_id: &str) -> Option<ConceptBottleneckModel> {
    let rows = read_results(dir.join("report.csv")).ok()?;
    match rows.as_slice() {
        [row] if row.model_id == run_id => ConceptBottleneckModel::load(dir.join("final.ckpt")).ok(),
        _ => None,
    }
}
