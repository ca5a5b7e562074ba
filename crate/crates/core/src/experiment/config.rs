//! Line-oriented `key = value` configuration files.
//!
//! ```text
//! # comments start with '#'
//! gen.n_total = 54000
//! gen.prevalence.train = 0.02
//! train.strategy = two-stage
//! train.hidden = 64,32
//! train.fraud_prevalence = 0.37      # or: none
//! finetune.mode = hybrid:0.1         # or: golden
//! grid.layers = 32 | 64,32 | 128,64,32
//! grid.alphas = 0.3, 0.5, 0.7
//! ```
//!
//! Keys are grouped by prefix: `gen.*` (dataset generator), `train.*` (strategy and main
//! stage), `finetune.*` (second stage of two-stage learning), `grid.*` (hyperparameter
//! grid), `eval.*`. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::synth::GenConfig;
use crate::training::{FinetuneMode, Strategy, StrategyConfig};
use crate::{Error, Result};

use super::GridSpec;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw key/value pairs; typed readers consume keys so leftovers can be reported.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, Entry>,
    source: String,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
            source: "<defaults>".into(),
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(source, n + 1, "expected 'key = value'"));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(source, n + 1, "empty key"));
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line: n + 1,
            };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(Error::parse(source, n + 1, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn bad(&self, key: &str, entry: &Entry, what: impl std::fmt::Display) -> Error {
        Error::InvalidConfig(format!(
            "{key} (line {} of {}): {what}",
            entry.line, self.source
        ))
    }

    fn take_with<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>> {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(None);
        };
        parse(&entry.value)
            .map(Some)
            .map_err(|e| self.bad(key, &entry, e))
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take_with(key, |s| s.parse::<T>().map_err(|e| format!("cannot parse '{s}': {e}")))? {
            *slot = v;
        }
        Ok(())
    }

    fn set_with<T>(&mut self, key: &str, slot: &mut T, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<()> {
        if let Some(v) = self.take_with(key, parse)? {
            *slot = v;
        }
        Ok(())
    }

    /// Errors on the first key no reader consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            Some((key, entry)) => Err(Error::InvalidConfig(format!(
                "unknown key '{key}' (line {} of {})",
                entry.line, self.source
            ))),
            None => Ok(()),
        }
    }
}

fn parse_optional_real(s: &str) -> Result<Option<f64>, String> {
    if s.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("expected a number or 'none', got '{s}'"))
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>, String> = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| format!("cannot parse '{v}': {e}")))
        .collect();
    match items {
        Ok(v) if v.is_empty() => Err("empty list".into()),
        other => other,
    }
}

/// `64,32`; `none` or empty for no hidden layer.
pub fn parse_layers(s: &str) -> Result<Vec<usize>, String> {
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    let widths: Vec<usize> = parse_list(s)?;
    if widths.contains(&0) {
        return Err("layer widths must be >= 1".into());
    }
    Ok(widths)
}

pub fn format_layers(layers: &[usize]) -> String {
    if layers.is_empty() {
        "none".into()
    } else {
        layers.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

fn format_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Everything a config file can set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gen: GenConfig,
    pub strategy: StrategyConfig,
    pub grid: GridSpec,
    pub fpr_target: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            strategy: StrategyConfig::default(),
            grid: GridSpec::default(),
            fpr_target: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(ConfigFile::load(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_file(ConfigFile::parse(text, "<config>")?)
    }

    pub fn from_file(mut f: ConfigFile) -> Result<Self> {
        let mut cfg = Self::default();

        let g = &mut cfg.gen;
        f.set("gen.n_total", &mut g.n_total)?;
        f.set("gen.validation_size", &mut g.validation_size)?;
        f.set("gen.test_size", &mut g.test_size)?;
        f.set("gen.feature_dim", &mut g.feature_dim)?;
        f.set("gen.concept_count", &mut g.concept_count)?;
        if let Some(names) = f.take_with("gen.concept_names", |s| {
            Ok(s.split(';').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect::<Vec<_>>())
        })? {
            g.concept_names = Some(names);
        }
        f.set("gen.rule_count", &mut g.rule_count)?;
        f.set("gen.prevalence.train", &mut g.prevalence.train)?;
        f.set("gen.prevalence.validation", &mut g.prevalence.validation)?;
        f.set("gen.prevalence.test", &mut g.prevalence.test)?;
        f.set("gen.golden_subset_size", &mut g.golden_subset_size)?;
        f.set("gen.golden_fraud_fraction", &mut g.golden_fraud_fraction)?;
        f.set("gen.noise_target_jaccard", &mut g.noise_target_jaccard)?;
        f.set("gen.max_miss_rate", &mut g.max_miss_rate)?;
        f.set("gen.max_false_fire_rate", &mut g.max_false_fire_rate)?;
        f.set("gen.max_extra_concept_prob", &mut g.max_extra_concept_prob)?;
        f.set("gen.concept_base_rate", &mut g.concept_base_rate)?;
        f.set("gen.concept_signal", &mut g.concept_signal)?;
        f.set("gen.decision_noise", &mut g.decision_noise)?;
        f.set("gen.check_learnability", &mut g.check_learnability)?;
        f.set("gen.seed", &mut g.seed)?;

        let s = &mut cfg.strategy;
        f.set("train.strategy", &mut s.strategy)?;
        f.set_with("train.hidden", &mut s.hidden, parse_layers)?;
        f.set("train.activation", &mut s.hidden_activation)?;
        f.set("train.alpha", &mut s.stage.alpha)?;
        f.set("train.learning_rate", &mut s.stage.learning_rate)?;
        f.set("train.epochs", &mut s.stage.epochs)?;
        f.set("train.batch_size", &mut s.stage.batch_size)?;
        f.set_with("train.fraud_prevalence", &mut s.stage.fraud_prevalence, parse_optional_real)?;
        f.set("train.golden_fraction", &mut s.golden_fraction)?;
        f.set("train.seed", &mut s.seed)?;

        // the fine-tuning stage shares the meta-loss weight unless set explicitly
        s.finetune.stage.alpha = s.stage.alpha;
        let ft = &mut s.finetune;
        f.set("finetune.alpha", &mut ft.stage.alpha)?;
        f.set("finetune.learning_rate", &mut ft.stage.learning_rate)?;
        f.set("finetune.epochs", &mut ft.stage.epochs)?;
        f.set("finetune.batch_size", &mut ft.stage.batch_size)?;
        f.set_with("finetune.fraud_prevalence", &mut ft.stage.fraud_prevalence, parse_optional_real)?;
        f.set("finetune.freeze_trunk", &mut ft.freeze_trunk)?;
        f.set::<FinetuneMode>("finetune.mode", &mut ft.mode)?;

        let gr = &mut cfg.grid;
        f.set_with("grid.layers", &mut gr.layers, |s| {
            s.split('|').map(|opt| parse_layers(opt.trim())).collect()
        })?;
        f.set_with("grid.learning_rates", &mut gr.learning_rates, parse_list)?;
        f.set_with("grid.alphas", &mut gr.alphas, parse_list)?;
        f.set_with("grid.seeds", &mut gr.seeds, parse_list)?;
        f.set_with("grid.strategies", &mut gr.strategies, parse_list::<Strategy>)?;
        f.set_with("grid.finetune_epochs", &mut gr.finetune_epochs, parse_list)?;
        f.set_with("grid.finetune_batch_sizes", &mut gr.finetune_batch_sizes, parse_list)?;
        f.set_with("grid.finetune_learning_rates", &mut gr.finetune_learning_rates, parse_list)?;

        f.set("eval.fpr_target", &mut cfg.fpr_target)?;
        f.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate().map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("gen.{msg}")),
            other => other,
        })?;
        self.strategy.validate()?;
        self.grid.validate()?;
        if !(self.fpr_target > 0.0 && self.fpr_target < 1.0) {
            return Err(Error::InvalidConfig("eval.fpr_target must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// The `train.*`, `finetune.*` and `eval.*` keys describing one run; parses back with
/// [`ExperimentConfig::parse`].
pub fn strategy_config_text(cfg: &StrategyConfig, fpr_target: f64) -> String {
    let mut out = String::new();
    let s = &cfg.stage;
    let ft = &cfg.finetune;
    let lines = [
        ("train.strategy", cfg.strategy.to_string()),
        ("train.hidden", format_layers(&cfg.hidden)),
        ("train.activation", cfg.hidden_activation.to_string()),
        ("train.alpha", s.alpha.to_string()),
        ("train.learning_rate", s.learning_rate.to_string()),
        ("train.epochs", s.epochs.to_string()),
        ("train.batch_size", s.batch_size.to_string()),
        ("train.fraud_prevalence", format_optional(s.fraud_prevalence)),
        ("train.golden_fraction", cfg.golden_fraction.to_string()),
        ("train.seed", cfg.seed.to_string()),
        ("finetune.alpha", ft.stage.alpha.to_string()),
        ("finetune.learning_rate", ft.stage.learning_rate.to_string()),
        ("finetune.epochs", ft.stage.epochs.to_string()),
        ("finetune.batch_size", ft.stage.batch_size.to_string()),
        ("finetune.fraud_prevalence", format_optional(ft.stage.fraud_prevalence)),
        ("finetune.freeze_trunk", ft.freeze_trunk.to_string()),
        ("finetune.mode", ft.mode.to_string()),
        ("eval.fpr_target", fpr_target.to_string()),
    ];
    for (k, v) in lines {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// The `grid.*` keys of `spec`.
pub fn grid_config_text(spec: &GridSpec) -> String {
    let layers: Vec<String> = spec.layers.iter().map(|l| format_layers(l)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "grid.layers = {}", layers.join(" | "));
    let _ = writeln!(out, "grid.learning_rates = {}", join(&spec.learning_rates));
    let _ = writeln!(out, "grid.alphas = {}", join(&spec.alphas));
    let _ = writeln!(out, "grid.seeds = {}", join(&spec.seeds));
    let _ = writeln!(out, "grid.strategies = {}", join(&spec.strategies));
    let _ = writeln!(out, "grid.finetune_epochs = {}", join(&spec.finetune_epochs));
    let _ = writeln!(out, "grid.finetune_batch_sizes = {}", join(&spec.finetune_batch_sizes));
    let _ = writeln!(out, "grid.finetune_learning_rates = {}", join(&spec.finetune_learning_rates));
    out
}
