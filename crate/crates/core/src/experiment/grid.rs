use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::{
    grid_config_text, load_completed_run, select_pareto, write_results, write_run_dir, RunFiles, RunRecord,
};
use crate::dataset::Dataset;
use crate::eval::{evaluate, pareto_front, EvalReport, EvalSets};
use crate::model::ConceptBottleneckModel;
use crate::training::{
    fine_tune, mix_seed, pretrain, train_hybrid, train_supervised, Strategy, StrategyConfig, StrategyData,
    TrainingTrace,
};
use crate::{Error, Result};

/// Hyperparameter grid. Every replicate seed runs
/// `|layers| × |learning_rates| × |alphas|` cells per strategy; two-stage cells
/// pre-train, and every validation-Pareto base is then fine-tuned over
/// `|finetune_epochs| × |finetune_batch_sizes| × |finetune_learning_rates|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub layers: Vec<Vec<usize>>,
    pub learning_rates: Vec<f64>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub finetune_epochs: Vec<usize>,
    pub finetune_batch_sizes: Vec<usize>,
    pub finetune_learning_rates: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            layers: vec![vec![32], vec![64, 32], vec![128, 64, 32]],
            learning_rates: vec![0.1, 0.01, 0.001],
            alphas: vec![0.3, 0.5, 0.7],
            seeds: vec![1, 2],
            strategies: Strategy::ALL.to_vec(),
            finetune_epochs: vec![10, 20],
            finetune_batch_sizes: vec![50, 100],
            finetune_learning_rates: vec![0.05, 0.01],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.layers.is_empty() || self.learning_rates.is_empty() || self.alphas.is_empty() {
            return bad("grid.layers, grid.learning_rates and grid.alphas must be nonempty");
        }
        if self.seeds.is_empty() || self.strategies.is_empty() {
            return bad("grid.seeds and grid.strategies must be nonempty");
        }
        if self.learning_rates.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return bad("grid.learning_rates must be > 0");
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("grid.alphas must lie in [0, 1]");
        }
        if self.strategies.contains(&Strategy::TwoStage)
            && (self.finetune_epochs.is_empty()
                || self.finetune_batch_sizes.is_empty()
                || self.finetune_learning_rates.is_empty()
                || self.finetune_epochs.contains(&0)
                || self.finetune_batch_sizes.contains(&0)
                || self.finetune_learning_rates.iter().any(|&lr| !lr.is_finite() || lr <= 0.0))
        {
            return bad("grid.finetune_epochs, grid.finetune_batch_sizes and grid.finetune_learning_rates must be nonempty and positive");
        }
        Ok(())
    }

    /// Cells per replicate seed and strategy.
    pub fn cells_per_seed(&self) -> usize {
        self.layers.len() * self.learning_rates.len() * self.alphas.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub run_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Single-stage runs in cell order, then fine-tuned runs.
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
    /// Runs reused from an earlier, interrupted invocation.
    pub resumed: usize,
}

#[derive(Clone)]
struct Job {
    run_id: String,
    label: &'static str,
    replicate: u64,
    config: StrategyConfig,
    base: Option<(String, ConceptBottleneckModel)>,
}

struct Done {
    record: RunRecord,
    model: ConceptBottleneckModel,
    resumed: bool,
}

fn fmt_real(v: f64) -> String {
    v.to_string()
}

struct Ctx<'a> {
    data: &'a StrategyData,
    sets: &'a EvalSets,
    fpr_target: f64,
    out: Option<&'a Path>,
}

impl Ctx<'_> {
    fn run_dir(&self, run_id: &str) -> Option<std::path::PathBuf> {
        self.out.map(|o| o.join("runs").join(run_id))
    }

    fn execute(&self, job: &Job) -> Result<Done> {
        let dir = self.run_dir(&job.run_id);
        if let Some(model) = dir.as_deref().and_then(|d| load_completed_run(d, &job.run_id)) {
            let report = evaluate(&model, self.sets, self.fpr_target)?;
            return Ok(Done {
                record: self.record(job, report, Duration::ZERO),
                model,
                resumed: true,
            });
        }

        let start = Instant::now();
        let cfg = &job.config;
        let val = self.data.validation.as_ref();
        let (model, traces, pretrained): (ConceptBottleneckModel, Vec<TrainingTrace>, _) = match (&job.base, job.label) {
            (Some((_, base)), _) => {
                let mut m = base.clone();
                let t = fine_tune(&mut m, &self.data.mixed, &cfg.finetune_stage(), val)?;
                (m, vec![t], Some(base))
            }
            (None, "pretrain") => {
                let mut m = cfg.init_model(self.data)?;
                let t = pretrain(&mut m, &self.data.noisy, &cfg.main_stage(), val)?;
                (m, vec![t], None)
            }
            (None, "hybrid") => {
                let mut m = cfg.init_model(self.data)?;
                let t = train_hybrid(&mut m, &self.data.mixed, &cfg.main_stage(), cfg.golden_fraction, val)?;
                (m, vec![t], None)
            }
            (None, _) => {
                let mut m = cfg.init_model(self.data)?;
                let t = train_supervised(&mut m, &self.data.golden, &cfg.main_stage(), val)?;
                (m, vec![t], None)
            }
        };
        let report = evaluate(&model, self.sets, self.fpr_target)?;
        let record = self.record(job, report, start.elapsed());
        if let Some(dir) = &dir {
            write_run_dir(
                dir,
                &RunFiles {
                    config: cfg,
                    fpr_target: self.fpr_target,
                    traces: &traces,
                    pretrained,
                    model: &model,
                    row: &record.to_row(),
                },
            )?;
        }
        Ok(Done {
            record,
            model,
            resumed: false,
        })
    }

    fn record(&self, job: &Job, report: EvalReport, wall_time: Duration) -> RunRecord {
        RunRecord {
            run_id: job.run_id.clone(),
            strategy: job.label.to_string(),
            replicate: job.replicate,
            config: job.config.clone(),
            base_run: job.base.as_ref().map(|(id, _)| id.clone()),
            report,
            pareto_overall: false,
            dir: self.run_dir(&job.run_id),
            wall_time,
        }
    }
}

fn run_jobs(ctx: &Ctx<'_>, jobs: &[Job]) -> Vec<Result<Done>> {
    jobs.par_iter().map(|j| ctx.execute(j)).collect()
}

/// Trains and evaluates every cell. Cell seeds derive from `(master_seed, replicate,
/// cell index)`, so results do not depend on scheduling. With `out`, run directories,
/// `results.csv` and `failures.csv` are written there, and completed run directories
/// from an earlier invocation are reused.
pub fn run_grid(
    ds: &Dataset,
    spec: &GridSpec,
    template: &StrategyConfig,
    fpr_target: f64,
    master_seed: u64,
    out: Option<&Path>,
) -> Result<GridOutcome> {
    spec.validate()?;
    let data = StrategyData::from_dataset(ds)?;
    let sets = EvalSets::from_dataset(ds)?;
    let ctx = Ctx {
        data: &data,
        sets: &sets,
        fpr_target,
        out,
    };
    if let Some(o) = out {
        std::fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
        let path = o.join("grid.cfg");
        std::fs::write(&path, grid_config_text(spec)).map_err(|e| Error::io(&path, e))?;
    }

    let mut jobs = Vec::new();
    for &replicate in &spec.seeds {
        for &strategy in &spec.strategies {
            let mut index = 0u64;
            for layers in &spec.layers {
                for &lr in &spec.learning_rates {
                    for &alpha in &spec.alphas {
                        let mut config = template.clone();
                        config.strategy = strategy;
                        config.hidden = layers.clone();
                        config.stage.learning_rate = lr;
                        config.stage.alpha = alpha;
                        config.finetune.stage.alpha = alpha;
                        config.seed = mix_seed(mix_seed(master_seed, replicate), index);
                        index += 1;
                        let label = match strategy {
                            Strategy::FullySupervised => "supervised",
                            Strategy::Hybrid => "hybrid",
                            Strategy::TwoStage => "pretrain",
                        };
                        jobs.push(Job {
                            run_id: format!(
                                "{label}-r{replicate}-h{}-lr{}-a{}",
                                config.layers_label(),
                                fmt_real(lr),
                                fmt_real(alpha)
                            ),
                            label,
                            replicate,
                            config,
                            base: None,
                        });
                    }
                }
            }
        }
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut resumed = 0;
    let mut bases: Vec<(RunRecord, ConceptBottleneckModel)> = Vec::new();
    for (job, done) in jobs.iter().zip(run_jobs(&ctx, &jobs)) {
        match done {
            Ok(d) => {
                resumed += usize::from(d.resumed);
                if job.label == "pretrain" {
                    bases.push((d.record.clone(), d.model));
                }
                records.push(d.record);
            }
            Err(e) => failures.push(CellFailure {
                run_id: job.run_id.clone(),
                error: e.to_string(),
            }),
        }
    }

    // Base models: validation Pareto front of each replicate's pre-trained pool.
    let selection_sets = EvalSets {
        validation: sets.validation.clone(),
        test: sets.validation.clone(),
    };
    let mut ft_jobs = Vec::new();
    for &replicate in &spec.seeds {
        let pool: Vec<&(RunRecord, ConceptBottleneckModel)> =
            bases.iter().filter(|(r, _)| r.replicate == replicate).collect();
        let mut points = Vec::new();
        let mut usable = Vec::new();
        for (rec, model) in &pool {
            match evaluate(model, &selection_sets, fpr_target) {
                Ok(v) => {
                    points.push((v.recall_at_fpr, v.map));
                    usable.push((rec, model));
                }
                Err(e) => failures.push(CellFailure {
                    run_id: format!("{}-selection", rec.run_id),
                    error: e.to_string(),
                }),
            }
        }
        for ((rec, model), on) in usable.into_iter().zip(pareto_front(&points)) {
            if !on {
                continue;
            }
            for &epochs in &spec.finetune_epochs {
                for &batch in &spec.finetune_batch_sizes {
                    for &lr in &spec.finetune_learning_rates {
                        let mut config = rec.config.clone();
                        config.finetune.stage.epochs = epochs;
                        config.finetune.stage.batch_size = batch;
                        config.finetune.stage.learning_rate = lr;
                        let tail = rec.run_id.trim_start_matches("pretrain");
                        ft_jobs.push(Job {
                            run_id: format!("two-stage{tail}-ft-e{epochs}-b{batch}-lr{}", fmt_real(lr)),
                            label: "two-stage",
                            replicate,
                            config,
                            base: Some((rec.run_id.clone(), (*model).clone())),
                        });
                    }
                }
            }
        }
    }
    for (job, done) in ft_jobs.iter().zip(run_jobs(&ctx, &ft_jobs)) {
        match done {
            Ok(d) => {
                resumed += usize::from(d.resumed);
                records.push(d.record);
            }
            Err(e) => failures.push(CellFailure {
                run_id: job.run_id.clone(),
                error: e.to_string(),
            }),
        }
    }

    select_pareto(&mut records);
    if let Some(o) = out {
        let rows: Vec<_> = records.iter().map(RunRecord::to_row).collect();
        write_results(o.join("results.csv"), &rows)?;
        let path = o.join("failures.csv");
        let mut text = String::from("run_id,error\n");
        for f in &failures {
            text.push_str(&format!("{},\"{}\"\n", f.run_id, f.error.replace('"', "'")));
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(GridOutcome {
        records,
        failures,
        resumed,
    })
}
