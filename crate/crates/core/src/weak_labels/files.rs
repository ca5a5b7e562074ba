//! Taxonomy and rule-map text files.
//!
//! Taxonomy: one concept name per line, in index order.
//! Rule map: `rule_id | human description | Concept A; Concept B`, `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use super::{ConceptTaxonomy, RuleConceptMap};
use crate::{Error, Result};

pub fn parse_taxonomy(text: &str) -> Result<ConceptTaxonomy> {
    let names = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    ConceptTaxonomy::new(names)
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<ConceptTaxonomy> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_taxonomy(&text)
}

pub fn save_taxonomy(path: impl AsRef<Path>, taxonomy: &ConceptTaxonomy) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for name in taxonomy.names() {
        out.push_str(name);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn parse_rule_map(text: &str, taxonomy: &ConceptTaxonomy, source: &str) -> Result<RuleConceptMap> {
    let mut map = RuleConceptMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        let [rule_id, description, concepts] = fields[..] else {
            return Err(Error::parse(
                source,
                n + 1,
                format!("expected 'rule_id | description | concepts', got {} fields", fields.len()),
            ));
        };
        if rule_id.is_empty() {
            return Err(Error::parse(source, n + 1, "empty rule id"));
        }
        let concepts: Vec<&str> = concepts
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .collect();
        map.insert(taxonomy, rule_id, description, &concepts)?;
    }
    Ok(map)
}

pub fn load_rule_map(path: impl AsRef<Path>, taxonomy: &ConceptTaxonomy) -> Result<RuleConceptMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rule_map(&text, taxonomy, &path.display().to_string())
}

pub fn format_rule_map(map: &RuleConceptMap, taxonomy: &ConceptTaxonomy) -> String {
    let mut out = String::from("# rule_id | description | concepts\n");
    for (id, entry) in map.iter() {
        let names: Vec<&str> = entry
            .concepts
            .iter()
            .map(|&i| taxonomy.names()[i].as_str())
            .collect();
        let _ = writeln!(out, "{id} | {} | {}", entry.description, names.join("; "));
    }
    out
}

pub fn save_rule_map(path: impl AsRef<Path>, map: &RuleConceptMap, taxonomy: &ConceptTaxonomy) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_rule_map(map, taxonomy)).map_err(|e| Error::io(path, e))
}
