//! On-disk layout of a generated dataset directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{report, Calibration, DatasetReport, GenConfig, SyntheticDataset};
use crate::dataset::{read_records, write_records, Dataset};
use crate::weak_labels::{load_rule_map, load_taxonomy, save_rule_map, save_taxonomy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub dir: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn records(&self) -> PathBuf {
        self.dir.join("dataset.jsonl")
    }

    pub fn taxonomy(&self) -> PathBuf {
        self.dir.join("taxonomy.txt")
    }

    pub fn rules(&self) -> PathBuf {
        self.dir.join("rules.txt")
    }

    pub fn provenance(&self) -> PathBuf {
        self.dir.join("provenance.json")
    }
}

/// Generator settings and fitted values stored next to the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: GenConfig,
    pub calibration: Calibration,
    pub report: DatasetReport,
}

/// Writes `dataset.jsonl`, `taxonomy.txt`, `rules.txt` and `provenance.json` into `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, ds: &SyntheticDataset) -> Result<DatasetPaths> {
    let paths = DatasetPaths::new(dir.as_ref());
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    write_records(paths.records(), &ds.data.records, &ds.data.taxonomy)?;
    save_taxonomy(paths.taxonomy(), &ds.data.taxonomy)?;
    save_rule_map(paths.rules(), &ds.data.rule_map, &ds.data.taxonomy)?;
    let provenance = Provenance {
        config: ds.config.clone(),
        calibration: ds.calibration.clone(),
        report: report(&ds.data),
    };
    let text = serde_json::to_string_pretty(&provenance)?;
    let path = paths.provenance();
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(paths)
}

/// Reads records, taxonomy and rule map back. Provenance is optional so hand-built
/// directories load too.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Dataset, Option<Provenance>)> {
    let paths = DatasetPaths::new(dir.as_ref());
    let taxonomy = load_taxonomy(paths.taxonomy())?;
    let rule_map = load_rule_map(paths.rules(), &taxonomy)?;
    let records = read_records(paths.records(), &taxonomy)?;
    let prov_path = paths.provenance();
    let provenance = if prov_path.exists() {
        let text = std::fs::read_to_string(&prov_path).map_err(|e| Error::io(&prov_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    Ok((
        Dataset {
            records,
            taxonomy,
            rule_map,
        },
        provenance,
    ))
}
