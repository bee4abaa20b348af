//! Evaluation dataset: relations, their paraphrase templates, and gold facts.
//!
//! A dataset is a directory with one JSON-lines file per relation. The first
//! line of each file is the relation header; every following line is one
//! `{subject, object}` fact. See [`format`] for the exact layout.
//!
//! Curation ([`curation::deduplicate`]) turns the raw data into an N-1
//! dataset: every `(subject, relation)` key that occurs more than once is
//! removed outright, and relations where too many instances had to be removed
//! are dropped entirely.

pub mod annotations;
pub mod curation;
pub mod format;
pub mod render;
pub mod stem;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curation::{deduplicate, CurationReport, RelationCuration, DEFAULT_DROP_THRESHOLD};
pub use format::{dataset_digest, load_dataset, write_dataset, write_relation};
pub use render::{render_queries, Query, QueryKey, DEFAULT_MASK};
pub use stem::{stem, subject_object_overlap};

/// Placeholder for the subject in a template pattern.
pub const SUBJECT_PLACEHOLDER: &str = "[X]";
/// Placeholder for the answer slot in a template pattern.
pub const ANSWER_PLACEHOLDER: &str = "[Y]";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: invalid record: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no relation files (*.jsonl) found in {0}")]
    EmptyDirectory(PathBuf),
    #[error("drop threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

/// One paraphrase template, e.g. `"[X] died in [Y] ."`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub pattern: String,
    #[serde(default)]
    pub lama_original: bool,
    #[serde(default)]
    pub unidiomatic: bool,
}

impl Template {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            lama_original: false,
            unidiomatic: false,
        }
    }

    /// Checks that both placeholders occur exactly once.
    pub fn validate(&self) -> Result<(), String> {
        for placeholder in [SUBJECT_PLACEHOLDER, ANSWER_PLACEHOLDER] {
            let n = self.pattern.matches(placeholder).count();
            if n != 1 {
                return Err(format!(
                    "template {:?} must contain {placeholder} exactly once (found {n})",
                    self.pattern
                ));
            }
        }
        Ok(())
    }
}

/// A relation with its templates, candidate vocabulary and quality flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub relation_id: String,
    pub name: String,
    pub templates: Vec<Template>,
    /// Answer vocabulary. Order is significant: it is the order candidates
    /// are sent to scorers and the tie-break order for selection.
    pub candidates: Vec<String>,
    pub semantic_overlap: bool,
    pub unidiomatic_objects: BTreeSet<String>,
    pub subject_object_similarity_prone: bool,
}

impl RelationSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.relation_id.trim().is_empty() {
            return Err("relation_id is empty".into());
        }
        if self.candidates.is_empty() {
            return Err(format!("relation {} has no candidates", self.relation_id));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.as_str()) {
                return Err(format!(
                    "relation {} lists candidate {c:?} twice",
                    self.relation_id
                ));
            }
        }
        if self.templates.is_empty() {
            return Err(format!("relation {} has no templates", self.relation_id));
        }
        for t in &self.templates {
            t.validate()?;
        }
        let n_lama = self.templates.iter().filter(|t| t.lama_original).count();
        if n_lama != 1 {
            return Err(format!(
                "relation {} must have exactly one lama_original template (found {n_lama})",
                self.relation_id
            ));
        }
        for o in &self.unidiomatic_objects {
            if !seen.contains(o.as_str()) {
                return Err(format!(
                    "relation {}: unidiomatic object {o:?} is not a candidate",
                    self.relation_id
                ));
            }
        }
        Ok(())
    }

    /// Index of the single `lama_original` template.
    pub fn lama_index(&self) -> usize {
        self.templates
            .iter()
            .position(|t| t.lama_original)
            .expect("validated relation has a lama_original template")
    }

    pub fn has_candidate(&self, answer: &str) -> bool {
        self.candidates.iter().any(|c| c == answer)
    }
}

/// One gold `(subject, relation, object)` fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTuple {
    pub subject: String,
    pub relation_id: String,
    pub object_gold: String,
    /// Whether subject and object share a word stem; computed on load.
    pub subj_obj_overlap: bool,
}

impl FactTuple {
    pub fn new(
        subject: impl Into<String>,
        relation_id: impl Into<String>,
        object_gold: impl Into<String>,
    ) -> Self {
        let subject = subject.into();
        let object_gold = object_gold.into();
        let subj_obj_overlap = subject_object_overlap(&subject, &object_gold);
        Self {
            subject,
            relation_id: relation_id.into(),
            object_gold,
            subj_obj_overlap,
        }
    }
}

/// A relation together with its facts.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub spec: RelationSpec,
    pub tuples: Vec<FactTuple>,
}

impl Relation {
    pub fn id(&self) -> &str {
        &self.spec.relation_id
    }

    /// Fraction of facts whose subject and object share a stem.
    pub fn subject_object_rate(&self) -> f64 {
        if self.tuples.is_empty() {
            return 0.0;
        }
        let n = self.tuples.iter().filter(|t| t.subj_obj_overlap).count();
        n as f64 / self.tuples.len() as f64
    }
}

/// A whole dataset, relations sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub relations: Vec<Relation>,
}

impl Dataset {
    pub fn new(mut relations: Vec<Relation>) -> Self {
        relations.sort_by(|a, b| a.spec.relation_id.cmp(&b.spec.relation_id));
        Self { relations }
    }

    pub fn relation(&self, relation_id: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.spec.relation_id == relation_id)
    }

    pub fn n_tuples(&self) -> usize {
        self.relations.iter().map(|r| r.tuples.len()).sum()
    }

    /// All queries in deterministic order (relation, tuple, template).
    pub fn queries(&self, mask: &str) -> Vec<Query> {
        self.relations
            .iter()
            .flat_map(|r| render_queries(&r.spec, &r.tuples, mask))
            .collect()
    }

    /// Gold object per `(relation_id, subject)`.
    pub fn gold_index(&self) -> HashMap<(String, String), String> {
        self.relations
            .iter()
            .flat_map(|r| r.tuples.iter())
            .map(|t| {
                (
                    (t.relation_id.clone(), t.subject.clone()),
                    t.object_gold.clone(),
                )
            })
            .collect()
    }

    /// SHA-256 over the canonical serialization of every relation.
    pub fn digest(&self) -> String {
        dataset_digest(self)
    }
}
