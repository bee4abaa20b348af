//! Consistency split by query-form issues.
//!
//! * subject-object similarity: within prone relations, facts whose subject
//!   and object share a stem vs the rest.
//! * unidiomatic objects: within relations with an object list, facts whose
//!   gold object is listed vs the rest.
//! * template issues: within relations with a flagged template, pairs where
//!   both, one or none of the two templates are flagged.
//! * semantic overlap: whole relations, flagged vs unflagged.
//!
//! Each cell pools pairs per relation, then macro-averages over the affected
//! relations in which the cell is non-empty.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::stats::{macro_summary, Summary};
use super::{relation_consistency, PairRecord, RelationMetrics};
use crate::corpus::{Dataset, FactTuple, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCell {
    pub label: String,
    pub summary: Option<Summary>,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedTable {
    /// Short machine name, e.g. `subject_object`.
    pub issue: String,
    /// Relations the split was computed over.
    pub relations: Vec<String>,
    pub cells: Vec<StratumCell>,
}

/// Per-relation pooled consistency for each stratum, then macro-averaged.
fn split_pairs<F>(
    issue: &str,
    labels: &[&str],
    relations: &[&Relation],
    pairs: &[PairRecord],
    stratum_of: F,
) -> StratifiedTable
where
    F: Fn(&Relation, &FactTuple, &PairRecord) -> usize,
{
    let mut per_label: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut counts = vec![0usize; labels.len()];
    for r in relations {
        let tuples: HashMap<&str, &FactTuple> = r.tuples.iter().map(|t| (t.subject.as_str(), t)).collect();
        let mut buckets: Vec<Vec<&PairRecord>> = vec![Vec::new(); labels.len()];
        for p in pairs.iter().filter(|p| p.relation_id == r.id()) {
            if let Some(t) = tuples.get(p.subject.as_str()) {
                buckets[stratum_of(r, t, p)].push(p);
            }
        }
        for (i, b) in buckets.iter().enumerate() {
            counts[i] += b.len();
            if let Some(c) = relation_consistency(b.iter().copied()) {
                per_label[i].push(c);
            }
        }
    }
    StratifiedTable {
        issue: issue.to_string(),
        relations: relations.iter().map(|r| r.id().to_string()).collect(),
        cells: labels
            .iter()
            .zip(per_label.iter().zip(counts))
            .map(|(l, (v, n))| StratumCell {
                label: l.to_string(),
                summary: macro_summary(v),
                n_pairs: n,
            })
            .collect(),
    }
}

pub fn subject_object_strata(dataset: &Dataset, pairs: &[PairRecord]) -> StratifiedTable {
    let rels: Vec<&Relation> = dataset
        .relations
        .iter()
        .filter(|r| r.spec.subject_object_similarity_prone)
        .collect();
    split_pairs(
        "subject_object",
        &["subject-object similarity", "no subj-obj similarity"],
        &rels,
        pairs,
        |_, t, _| if t.subj_obj_overlap { 0 } else { 1 },
    )
}

pub fn object_issue_strata(dataset: &Dataset, pairs: &[PairRecord]) -> StratifiedTable {
    let rels: Vec<&Relation> = dataset
        .relations
        .iter()
        .filter(|r| !r.spec.unidiomatic_objects.is_empty())
        .collect();
    split_pairs(
        "object_issue",
        &["object issue", "no object issue"],
        &rels,
        pairs,
        |r, t, _| if r.spec.unidiomatic_objects.contains(&t.object_gold) { 0 } else { 1 },
    )
}

pub fn template_issue_strata(dataset: &Dataset, pairs: &[PairRecord]) -> StratifiedTable {
    let rels: Vec<&Relation> = dataset
        .relations
        .iter()
        .filter(|r| r.spec.templates.iter().any(|t| t.unidiomatic))
        .collect();
    split_pairs(
        "template_issue",
        &["template issue both", "template issue one", "template issue none"],
        &rels,
        pairs,
        |r, _, p| {
            let bad = |i: usize| r.spec.templates.get(i).map(|t| t.unidiomatic).unwrap_or(false);
            match (bad(p.template_i), bad(p.template_j)) {
                (true, true) => 0,
                (false, false) => 2,
                _ => 1,
            }
        },
    )
}

/// Whole relations, flagged vs unflagged, macro-averaging relation consistency.
pub fn semantic_overlap_strata(dataset: &Dataset, relations: &[RelationMetrics]) -> StratifiedTable {
    let flagged = |id: &str| dataset.relation(id).map(|r| r.spec.semantic_overlap).unwrap_or(false);
    let mut cells = Vec::new();
    for (label, want) in [("semantic overlap", true), ("no semantic overlap", false)] {
        let group: Vec<&RelationMetrics> = relations.iter().filter(|m| flagged(&m.relation_id) == want).collect();
        let values: Vec<f64> = group.iter().filter_map(|m| m.consistency).collect();
        cells.push(StratumCell {
            label: label.to_string(),
            summary: macro_summary(&values),
            n_pairs: group.iter().map(|m| m.n_pairs).sum(),
        });
    }
    StratifiedTable {
        issue: "semantic_overlap".into(),
        relations: relations.iter().map(|m| m.relation_id.clone()).collect(),
        cells,
    }
}

/// The four tables in a fixed order.
pub fn stratify(dataset: &Dataset, pairs: &[PairRecord], relations: &[RelationMetrics]) -> Vec<StratifiedTable> {
    vec![
        subject_object_strata(dataset, pairs),
        object_issue_strata(dataset, pairs),
        template_issue_strata(dataset, pairs),
        semantic_overlap_strata(dataset, relations),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate;
    use crate::scoring::Prediction;
    use crate::corpus::QueryKey;
    use crate::synthetic::{toy_dataset, ToyShape};

    fn constant_predictions(d: &Dataset, answer_for: impl Fn(&str, usize) -> String) -> Vec<Prediction> {
        d.queries("[MASK]")
            .into_iter()
            .map(|q| Prediction {
                chosen: answer_for(&q.key.subject, q.key.template_index),
                query: QueryKey { ..q.key },
                scores: vec![],
                passages: None,
                query_embedding: None,
                free_generation: None,
            })
            .collect()
    }

    #[test]
    fn no_flags_means_empty_affected() {
        let d = toy_dataset(ToyShape {
            relations: 2,
            tuples_per_relation: 4,
            candidates: 3,
            templates: 3,
        });
        let preds = constant_predictions(&d, |_, t| format!("a{t}"));
        let (m, pairs) = evaluate(&d, &preds);
        let tables = stratify(&d, &pairs, &m.relations);
        for t in &tables[..3] {
            assert!(t.relations.is_empty());
            assert!(t.cells.iter().all(|c| c.summary.is_none()));
        }
        let so = &tables[3];
        assert!(so.cells[0].summary.is_none());
        assert_eq!(so.cells[1].summary.unwrap().mean, m.summary.consistency.unwrap().mean);
    }

    #[test]
    fn template_pair_lands_in_one() {
        let mut d = toy_dataset(ToyShape {
            relations: 1,
            tuples_per_relation: 2,
            candidates: 3,
            templates: 3,
        });
        d.relations[0].spec.templates[1].unidiomatic = true;
        // Template 1 always disagrees with the others.
        let preds = constant_predictions(&d, |_, t| if t == 1 { "odd".into() } else { "even".into() });
        let (m, pairs) = evaluate(&d, &preds);
        let t = &stratify(&d, &pairs, &m.relations)[2];
        assert!(t.cells[0].summary.is_none());
        assert_eq!(t.cells[1].summary.unwrap().mean, 0.0);
        assert_eq!(t.cells[1].n_pairs, 4);
        assert_eq!(t.cells[2].summary.unwrap().mean, 1.0);
    }
}
