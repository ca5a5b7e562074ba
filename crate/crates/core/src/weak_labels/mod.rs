//! Distant supervision: concept labels derived from triggered expert rules.
//!
//! A [`RuleConceptMap`] links each rule to one or more concepts of a
//! [`ConceptTaxonomy`]. A record's noisy concept vector is the union of the concepts of
//! all the rules it triggered.

mod files;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TransactionRecord;
use crate::{Error, Result};

pub use files::{
    format_rule_map, load_rule_map, load_taxonomy, parse_rule_map, parse_taxonomy, save_rule_map,
    save_taxonomy,
};

/// Ordered, unique concept names. Position `i` is bit `i` of every concept vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptTaxonomy {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConceptTaxonomy {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::Taxonomy(format!("concept {i} has an empty name")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Taxonomy(format!("duplicate concept '{name}'")));
            }
        }
        Ok(Self { names, index })
    }

    /// 14 e-commerce fraud concepts. The first three match the rule examples shipped in
    /// `data/example.rules`.
    pub fn fraud_default() -> Self {
        Self::new(
            DEFAULT_CONCEPTS.iter().map(|s| s.to_string()).collect(),
        )
        .expect("default taxonomy is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Builds a vector from concept names, failing on unknown names.
    pub fn vector_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<ConceptVector> {
        let mut v = ConceptVector::zeros(self.len());
        for name in names {
            let i = self.index_of(name.as_ref()).ok_or_else(|| Error::UnknownConcept {
                rule_id: "-".into(),
                concept: name.as_ref().to_string(),
            })?;
            v.set(i, true);
        }
        Ok(v)
    }

    pub fn names_of(&self, v: &ConceptVector) -> Vec<String> {
        v.ones().map(|i| self.names[i].clone()).collect()
    }
}

const DEFAULT_CONCEPTS: [&str; 14] = [
    "Suspicious Items",
    "Suspicious Customer",
    "Suspicious Payment",
    "Suspicious Delivery",
    "Suspicious Device",
    "Suspicious IP",
    "Suspicious Email",
    "Suspicious Billing Address",
    "High Order Velocity",
    "Account Takeover",
    "Card Testing",
    "Identity Mismatch",
    "Reseller Pattern",
    "Promotion Abuse",
];

/// Binary concept labels in taxonomy order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptVector(Vec<bool>);

impl ConceptVector {
    pub fn zeros(k: usize) -> Self {
        Self(vec![false; k])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_superset_of(&self, other: &ConceptVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(&a, &b)| a || !b)
    }

    /// `0.0`/`1.0` row for training targets.
    pub fn to_reals(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(u8::from(b))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleEntry {
    pub description: String,
    /// Concept indices, ascending and nonempty.
    pub concepts: BTreeSet<usize>,
}

/// Validated one-to-many mapping from rule IDs to taxonomy concepts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleConceptMap {
    entries: BTreeMap<String, RuleEntry>,
}

impl RuleConceptMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a rule, resolving concept names against the taxonomy.
    pub fn insert<S: AsRef<str>>(
        &mut self,
        taxonomy: &ConceptTaxonomy,
        rule_id: &str,
        description: &str,
        concepts: &[S],
    ) -> Result<()> {
        if self.entries.contains_key(rule_id) {
            return Err(Error::DuplicateRule(rule_id.to_string()));
        }
        if concepts.is_empty() {
            return Err(Error::EmptyConceptList(rule_id.to_string()));
        }
        let mut resolved = BTreeSet::new();
        for c in concepts {
            let c = c.as_ref();
            let i = taxonomy.index_of(c).ok_or_else(|| Error::UnknownConcept {
                rule_id: rule_id.to_string(),
                concept: c.to_string(),
            })?;
            resolved.insert(i);
        }
        self.entries.insert(
            rule_id.to_string(),
            RuleEntry {
                description: description.to_string(),
                concepts: resolved,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, rule_id: &str) -> Option<&RuleEntry> {
        self.entries.get(rule_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RuleEntry)> {
        self.entries.iter()
    }
}

/// How annotation treats rule IDs missing from the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownRulePolicy {
    /// Skip and count them.
    #[default]
    Skip,
    /// Fail on the first one.
    Strict,
}

/// Concept vector for one record plus the number of triggered rules not found in the map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub concepts: ConceptVector,
    pub unknown_rules: usize,
}

/// Union of the concepts of every mapped triggered rule.
pub fn annotate<I, S>(
    triggered_rules: I,
    map: &RuleConceptMap,
    taxonomy: &ConceptTaxonomy,
    policy: UnknownRulePolicy,
) -> Result<Annotation>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut concepts = ConceptVector::zeros(taxonomy.len());
    let mut unknown_rules = 0;
    for rule in triggered_rules {
        let rule = rule.as_ref();
        match map.get(rule) {
            Some(entry) => {
                for &c in &entry.concepts {
                    concepts.set(c, true);
                }
            }
            None if policy == UnknownRulePolicy::Strict => {
                return Err(Error::UnknownRule(rule.to_string()));
            }
            None => unknown_rules += 1,
        }
    }
    Ok(Annotation {
        concepts,
        unknown_rules,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AnnotationSummary {
    pub records: usize,
    /// Records that also carry golden concepts; their golden labels are kept.
    pub golden_records: usize,
    pub records_without_rules: usize,
    pub unknown_rule_hits: usize,
}

/// Recomputes the noisy concept vector of every record from its triggered rules.
/// Golden concepts and the label source are left as they are.
pub fn annotate_dataset(
    records: &mut [TransactionRecord],
    map: &RuleConceptMap,
    taxonomy: &ConceptTaxonomy,
    policy: UnknownRulePolicy,
) -> Result<AnnotationSummary> {
    let results: Vec<Annotation> = records
        .par_iter()
        .map(|r| annotate(&r.triggered_rules, map, taxonomy, policy))
        .collect::<Result<_>>()?;

    let mut summary = AnnotationSummary::default();
    for (record, a) in records.iter_mut().zip(results) {
        summary.records += 1;
        summary.golden_records += usize::from(record.golden_concepts.is_some());
        summary.unknown_rule_hits += a.unknown_rules;
        summary.records_without_rules += usize::from(record.triggered_rules.is_empty());
        record.noisy_concepts = Some(a.concepts);
    }
    Ok(summary)
}

/// `|a ∩ b| / |a ∪ b|` over set bits; two empty vectors score 1.
pub fn jaccard(a: &ConceptVector, b: &ConceptVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
