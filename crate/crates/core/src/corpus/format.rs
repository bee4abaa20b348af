//! Canonical on-disk dataset format.
//!
//! ```text
//! {"relation_id":"P20","name":"died-in","templates":[...],"candidates":[...],
//!  "flags":{"semantic_overlap":true,"subj_obj_prone":false},"unidiomatic_objects":[]}
//! {"subject":"Anne Redpath","object":"Edinburgh"}
//! ...
//! ```
//!
//! One file per relation named `<relation_id>.jsonl`, UTF-8, `\n` terminated.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, FactTuple, Relation, RelationSpec, Template};
use crate::digest::sha256_hex;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct HeaderFlags {
    #[serde(default)]
    semantic_overlap: bool,
    #[serde(default)]
    subj_obj_prone: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RelationHeader {
    relation_id: String,
    name: String,
    templates: Vec<Template>,
    candidates: Vec<String>,
    #[serde(default)]
    flags: HeaderFlags,
    #[serde(default)]
    unidiomatic_objects: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TupleLine {
    subject: String,
    object: String,
}

impl From<&RelationSpec> for RelationHeader {
    fn from(s: &RelationSpec) -> Self {
        Self {
            relation_id: s.relation_id.clone(),
            name: s.name.clone(),
            templates: s.templates.clone(),
            candidates: s.candidates.clone(),
            flags: HeaderFlags {
                semantic_overlap: s.semantic_overlap,
                subj_obj_prone: s.subject_object_similarity_prone,
            },
            unidiomatic_objects: s.unidiomatic_objects.iter().cloned().collect(),
        }
    }
}

impl From<RelationHeader> for RelationSpec {
    fn from(h: RelationHeader) -> Self {
        Self {
            relation_id: h.relation_id,
            name: h.name,
            templates: h.templates,
            candidates: h.candidates,
            semantic_overlap: h.flags.semantic_overlap,
            unidiomatic_objects: h.unidiomatic_objects.into_iter().collect::<BTreeSet<_>>(),
            subject_object_similarity_prone: h.flags.subj_obj_prone,
        }
    }
}

/// Parses one relation file from its text.
pub fn parse_relation(path: &Path, text: &str) -> Result<Relation, CorpusError> {
    let parse_err = |line: usize, message: String| CorpusError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let invalid = |line: usize, message: String| CorpusError::Validation {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing relation header".into()))?;
    let header: RelationHeader =
        serde_json::from_str(header).map_err(|e| parse_err(hline + 1, e.to_string()))?;
    let spec = RelationSpec::from(header);
    spec.validate().map_err(|m| invalid(hline + 1, m))?;

    let candidates: HashSet<&str> = spec.candidates.iter().map(String::as_str).collect();
    let mut tuples = Vec::new();
    for (idx, line) in lines {
        let rec: TupleLine =
            serde_json::from_str(line).map_err(|e| parse_err(idx + 1, e.to_string()))?;
        if rec.subject.is_empty() || rec.object.is_empty() {
            return Err(invalid(idx + 1, "subject and object must be non-empty".into()));
        }
        if !candidates.contains(rec.object.as_str()) {
            return Err(invalid(
                idx + 1,
                format!(
                    "gold object {:?} is not a candidate of relation {}",
                    rec.object, spec.relation_id
                ),
            ));
        }
        tuples.push(FactTuple::new(rec.subject, &spec.relation_id, rec.object));
    }
    Ok(Relation { spec, tuples })
}

/// Loads every `*.jsonl` file in `dir`, sorted by relation id.
///
/// Uniqueness of `(subject, relation)` is not enforced here: raw data is
/// expected to contain duplicates, which [`super::deduplicate`] removes.
pub fn load_dataset(dir: &Path) -> Result<Dataset, CorpusError> {
    let io_err = |path: &Path, source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl") && p.is_file())
        .collect();
    if files.is_empty() {
        return Err(CorpusError::EmptyDirectory(dir.to_path_buf()));
    }
    files.sort();

    let mut relations = Vec::with_capacity(files.len());
    let mut seen = HashSet::new();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let relation = parse_relation(&path, &text)?;
        if !seen.insert(relation.spec.relation_id.clone()) {
            return Err(CorpusError::Validation {
                path,
                line: 1,
                message: format!("relation {} defined twice", relation.spec.relation_id),
            });
        }
        relations.push(relation);
    }
    Ok(Dataset::new(relations))
}

/// Canonical serialization of one relation (header line + one line per fact).
pub fn relation_to_jsonl(relation: &Relation) -> String {
    let mut out = serde_json::to_string(&RelationHeader::from(&relation.spec))
        .expect("header serializes");
    out.push('\n');
    for t in &relation.tuples {
        let line = TupleLine {
            subject: t.subject.clone(),
            object: t.object_gold.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("tuple serializes"));
        out.push('\n');
    }
    out
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_relation(dir: &Path, relation: &Relation) -> Result<PathBuf, CorpusError> {
    let path = dir.join(format!("{}.jsonl", relation.spec.relation_id));
    write_atomic(&path, relation_to_jsonl(relation).as_bytes()).map_err(|source| {
        CorpusError::Io {
            path: path.clone(),
            source,
        }
    })?;
    Ok(path)
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Vec<PathBuf>, CorpusError> {
    dataset
        .relations
        .iter()
        .map(|r| write_relation(dir, r))
        .collect()
}

/// Digest of the canonical serialization, independent of file layout details
/// such as whitespace or key order in the source files.
pub fn dataset_digest(dataset: &Dataset) -> String {
    let mut buf = String::new();
    for r in &dataset.relations {
        buf.push_str(&relation_to_jsonl(r));
        buf.push('\u{1e}');
    }
    sha256_hex(buf.as_bytes())
}
