//! Grid orchestration, result files, Pareto selection and plotting.

mod common;

use std::path::Path;

use cbx::dataset::Dataset;
use cbx::experiment::{
    read_results, render_tradeoff_svg, run_grid, select_pareto_rows, write_results, ExperimentConfig,
    GridSpec, ResultRow,
};
use cbx::synth::generate;
use cbx::training::{StageConfig, Strategy, StrategyConfig};
use common::small_gen;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn dataset() -> Dataset {
    generate(&small_gen(12)).unwrap().data
}

fn spec() -> GridSpec {
    GridSpec {
        layers: vec![vec![8], vec![8, 4]],
        learning_rates: vec![0.1],
        alphas: vec![0.3, 0.7],
        seeds: vec![1, 2],
        strategies: Strategy::ALL.to_vec(),
        finetune_epochs: vec![2],
        finetune_batch_sizes: vec![50],
        finetune_learning_rates: vec![0.05, 0.01],
    }
}

fn template() -> StrategyConfig {
    let mut t = StrategyConfig {
        stage: StageConfig {
            epochs: 2,
            batch_size: 50,
            fraud_prevalence: Some(0.37),
            ..StageConfig::default()
        },
        ..StrategyConfig::default()
    };
    t.finetune.stage.epochs = 2;
    t
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn grid_produces_a_row_per_cell_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec();
    let out = run_grid(&dataset(), &spec, &template(), 0.05, 3, Some(tmp.path())).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    let rows = read_results(tmp.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), out.records.len());

    let per_strategy = spec.cells_per_seed() * spec.seeds.len();
    for label in ["supervised", "hybrid", "pretrain"] {
        assert_eq!(rows.iter().filter(|r| r.strategy == label).count(), per_strategy, "{label}");
    }
    let fine_tuned: Vec<_> = out.records.iter().filter(|r| r.strategy == "two-stage").collect();
    assert!(!fine_tuned.is_empty());
    assert_eq!(fine_tuned.len() % 2, 0);
    assert!(fine_tuned.iter().all(|r| r.base_run.as_deref().is_some_and(|b| b.starts_with("pretrain-"))));

    for r in &out.records {
        let dir = tmp.path().join("runs").join(&r.run_id);
        for file in ["config", "trace.csv", "final.ckpt", "report.csv"] {
            assert!(dir.join(file).is_file(), "{} missing {file}", r.run_id);
        }
        assert_eq!(dir.join("pretrain.ckpt").is_file(), r.strategy == "two-stage");
    }
    for label in ["supervised", "hybrid", "pretrain", "two-stage"] {
        assert!(rows.iter().any(|r| r.strategy == label && r.pareto), "no front for {label}");
    }
    assert!(tmp.path().join("grid.cfg").is_file());
}

#[test]
fn grid_results_do_not_depend_on_thread_count() {
    let ds = dataset();
    let spec = GridSpec {
        seeds: vec![1],
        ..spec()
    };
    let run = |threads: usize| {
        let tmp = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_grid(&ds, &spec, &template(), 0.05, 9, Some(tmp.path()))).unwrap();
        let ckpt = read(&tmp.path().join("runs/supervised-r1-h8x4-lr0.1-a0.7/final.ckpt"));
        (read(&tmp.path().join("results.csv")), ckpt)
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn interrupted_grids_resume_from_completed_runs() {
    let ds = dataset();
    let spec = GridSpec {
        seeds: vec![1],
        ..spec()
    };
    let tmp = tempfile::tempdir().unwrap();
    let first = run_grid(&ds, &spec, &template(), 0.05, 5, Some(tmp.path())).unwrap();
    let results = read(&tmp.path().join("results.csv"));

    // simulate a crash: two runs never wrote their report, the results file is gone
    let runs = tmp.path().join("runs");
    std::fs::remove_file(runs.join("hybrid-r1-h8-lr0.1-a0.3/report.csv")).unwrap();
    std::fs::remove_dir_all(runs.join("supervised-r1-h8x4-lr0.1-a0.7")).unwrap();
    std::fs::remove_file(tmp.path().join("results.csv")).unwrap();

    let second = run_grid(&ds, &spec, &template(), 0.05, 5, Some(tmp.path())).unwrap();
    assert_eq!(second.records.len(), first.records.len());
    assert_eq!(second.resumed, first.records.len() - 2);
    assert_eq!(read(&tmp.path().join("results.csv")), results);
}

#[test]
fn results_files_round_trip_and_pareto_is_recomputed() {
    let tmp = tempfile::tempdir().unwrap();
    let row = |id: &str, strategy: &str, recall: f64, map: f64| ResultRow {
        model_id: id.into(),
        seed: 1,
        strategy: strategy.into(),
        alpha: 0.5,
        lr: 0.1,
        layers: "32".into(),
        recall_at_fpr: recall,
        realized_fpr: 0.04,
        threshold: 0.7,
        map,
        excluded_concepts: 0,
        pareto: false,
    };
    let mut rows = vec![
        row("a", "hybrid", 0.5, 0.4),
        row("b", "hybrid", 0.4, 0.6),
        row("c", "hybrid", 0.3, 0.3),
        row("d", "supervised", 0.2, 0.2),
    ];
    select_pareto_rows(&mut rows);
    assert_eq!(rows.iter().map(|r| r.pareto).collect::<Vec<_>>(), [true, true, false, true]);
    let path = tmp.path().join("results.csv");
    write_results(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(
        "model_id,seed,strategy,alpha,lr,layers,recall_at_fpr,realized_fpr,threshold,map,excluded_concepts,pareto\n"
    ));
    assert_eq!(read_results(&path).unwrap(), rows);

    write_results(&path, &[]).unwrap();
    assert!(read_results(&path).unwrap().is_empty());
}

#[test]
fn tradeoff_plot_is_wellformed_svg() {
    let ds = dataset();
    let spec = GridSpec {
        seeds: vec![1],
        strategies: vec![Strategy::FullySupervised, Strategy::Hybrid],
        ..spec()
    };
    let out = run_grid(&ds, &spec, &template(), 0.05, 2, None).unwrap();
    let rows: Vec<ResultRow> = out.records.iter().map(|r| r.to_row()).collect();
    let svg = render_tradeoff_svg(&rows);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let group = |id: &str| doc.descendants().find(|n| n.attribute("id") == Some(id)).unwrap();
    let points: Vec<_> = group("points").children().filter(|n| n.has_tag_name("circle")).collect();
    assert_eq!(points.len(), rows.len());
    let big = points.iter().filter(|c| c.attribute("r") == Some("7")).count();
    assert_eq!(big, rows.iter().filter(|r| r.pareto).count());
    let legend: Vec<&str> = group("legend").descendants().filter(|n| n.has_tag_name("text")).filter_map(|n| n.text()).collect();
    assert_eq!(legend, ["supervised", "hybrid"]);
}

#[test]
fn shipped_configs_parse() {
    let default = ExperimentConfig::load(format!("{DATA}/default.cfg")).unwrap();
    assert_eq!(default.strategy.strategy, Strategy::TwoStage);
    assert_eq!(default.gen.golden_subset_size, 842);
    let small = ExperimentConfig::load(format!("{DATA}/small_grid.cfg")).unwrap();
    assert_eq!(small.grid.cells_per_seed(), 4);
    let err = ExperimentConfig::parse("grid.layers = 32 | x\n").unwrap_err().to_string();
    assert!(err.contains("grid.layers"), "{err}");
}
