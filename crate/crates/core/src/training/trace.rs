use std::fmt;
use std::time::Duration;

use crate::model::LossParts;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSplit {
    Train,
    Validation,
}

impl fmt::Display for LossSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossSplit::Train => "train",
            LossSplit::Validation => "validation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub split: LossSplit,
    pub loss: LossParts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub stage: String,
    pub epochs: Vec<EpochLoss>,
    pub wall_time: Duration,
}

impl TrainingTrace {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            epochs: Vec::new(),
            wall_time: Duration::ZERO,
        }
    }

    /// Fails on a non-finite loss so divergence stops a run.
    pub fn push(&mut self, epoch: usize, split: LossSplit, loss: LossParts) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::NonFinite("epoch loss"));
        }
        self.epochs.push(EpochLoss { epoch, split, loss });
        Ok(())
    }

    pub fn losses(&self, split: LossSplit) -> impl Iterator<Item = &LossParts> {
        self.epochs.iter().filter(move |e| e.split == split).map(|e| &e.loss)
    }

    pub fn final_loss(&self, split: LossSplit) -> Option<&LossParts> {
        self.losses(split).last()
    }
}

/// `stage,epoch,split,total_loss,decision_loss,explain_loss`, one row per epoch and split.
pub fn traces_to_csv(traces: &[TrainingTrace]) -> String {
    let mut out = String::from("stage,epoch,split,total_loss,decision_loss,explain_loss\n");
    for t in traces {
        for e in &t.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.stage, e.epoch, e.split, e.loss.total, e.loss.decision, e.loss.explain
            ));
        }
    }
    out
}
