//! Transaction records and the line-delimited dataset file.
//!
//! Each line is one JSON object:
//!
//! ```text
//! {"id":7,"split":"train","features":[0.1,...],"y_d":0,"rules":["r03"],
//!  "golden_concepts":["Suspicious Items"],"noisy_concepts":[...],"label_source":"golden"}
//! ```
//!
//! Concept fields hold names (not bits) and are omitted when absent.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::weak_labels::{ConceptTaxonomy, ConceptVector, RuleConceptMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Golden,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub id: u64,
    pub split: Split,
    pub features: Vec<f64>,
    /// 1 = fraud.
    pub decision_label: u8,
    pub triggered_rules: BTreeSet<String>,
    pub golden_concepts: Option<ConceptVector>,
    pub noisy_concepts: Option<ConceptVector>,
    pub label_source: LabelSource,
}

impl TransactionRecord {
    pub fn is_fraud(&self) -> bool {
        self.decision_label == 1
    }

    pub fn is_golden(&self) -> bool {
        self.label_source == LabelSource::Golden
    }

    /// The concept labels training should use: golden when present, else noisy.
    pub fn best_concepts(&self) -> Option<&ConceptVector> {
        self.golden_concepts.as_ref().or(self.noisy_concepts.as_ref())
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: u64,
    split: Split,
    features: Vec<f64>,
    y_d: u8,
    rules: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    golden_concepts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noisy_concepts: Option<Vec<String>>,
    label_source: LabelSource,
}

pub fn record_to_line(record: &TransactionRecord, taxonomy: &ConceptTaxonomy) -> Result<String> {
    let line = RecordLine {
        id: record.id,
        split: record.split,
        features: record.features.clone(),
        y_d: record.decision_label,
        rules: record.triggered_rules.iter().cloned().collect(),
        golden_concepts: record.golden_concepts.as_ref().map(|v| taxonomy.names_of(v)),
        noisy_concepts: record.noisy_concepts.as_ref().map(|v| taxonomy.names_of(v)),
        label_source: record.label_source,
    };
    Ok(serde_json::to_string(&line)?)
}

pub fn record_from_line(line: &str, taxonomy: &ConceptTaxonomy) -> Result<TransactionRecord> {
    let parsed: RecordLine = serde_json::from_str(line)?;
    if parsed.y_d > 1 {
        return Err(Error::InvalidConfig(format!("record {}: y_d must be 0 or 1", parsed.id)));
    }
    if parsed.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("record features"));
    }
    let golden = parsed
        .golden_concepts
        .map(|names| taxonomy.vector_from_names(&names))
        .transpose()?;
    let noisy = parsed
        .noisy_concepts
        .map(|names| taxonomy.vector_from_names(&names))
        .transpose()?;
    if parsed.label_source == LabelSource::Golden && golden.is_none() {
        return Err(Error::InvalidConfig(format!(
            "record {}: label_source golden without golden_concepts",
            parsed.id
        )));
    }
    Ok(TransactionRecord {
        id: parsed.id,
        split: parsed.split,
        features: parsed.features,
        decision_label: parsed.y_d,
        triggered_rules: parsed.rules.into_iter().collect(),
        golden_concepts: golden,
        noisy_concepts: noisy,
        label_source: parsed.label_source,
    })
}

pub fn write_records(
    path: impl AsRef<Path>,
    records: &[TransactionRecord],
    taxonomy: &ConceptTaxonomy,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = record_to_line(r, taxonomy)?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>, taxonomy: &ConceptTaxonomy) -> Result<Vec<TransactionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = record_from_line(&line, taxonomy)
            .map_err(|e| Error::parse(path.display(), n + 1, e))?;
        if !ids.insert(record.id) {
            return Err(Error::parse(path.display(), n + 1, format!("duplicate id {}", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

/// Records together with the taxonomy and rule map that give their concept fields meaning.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<TransactionRecord>,
    pub taxonomy: ConceptTaxonomy,
    pub rule_map: RuleConceptMap,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &TransactionRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Golden-labelled training records.
    pub fn golden_train(&self) -> Vec<&TransactionRecord> {
        self.split(Split::Train).filter(|r| r.is_golden()).collect()
    }

    /// Noisy-labelled training records.
    pub fn noisy_train(&self) -> Vec<&TransactionRecord> {
        self.split(Split::Train).filter(|r| !r.is_golden()).collect()
    }
}

/// Records of one split, in file order.
pub fn split_records(records: &[TransactionRecord], split: Split) -> Vec<&TransactionRecord> {
    records.iter().filter(|r| r.split == split).collect()
}
