//! Duplicate removal and relation dropping.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Relation};

/// Relations whose duplicate-instance fraction exceeds this are dropped.
///
/// Any value in `(0.10, 0.31]` separates the kept relations (at most 10%
/// duplicates) from the one that is not N-1 (280 of 900).
pub const DEFAULT_DROP_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCuration {
    pub relation_id: String,
    pub name: String,
    /// Instances before curation.
    pub entries: usize,
    /// Instances whose `(subject, relation)` key occurs at least twice.
    pub duplicates: usize,
    /// Instances that repeat an earlier identical `(subject, relation, object)`.
    pub exact_duplicates: usize,
    pub retained: usize,
    pub removed: usize,
    pub duplicate_rate: f64,
    /// Fraction of retained facts with subject/object stem overlap.
    pub subject_object_rate: f64,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub drop_threshold: f64,
    pub relations: Vec<RelationCuration>,
}

impl CurationReport {
    pub fn total_entries(&self) -> usize {
        self.relations.iter().map(|r| r.entries).sum()
    }

    pub fn total_retained(&self) -> usize {
        self.relations.iter().map(|r| r.retained).sum()
    }

    pub fn total_removed(&self) -> usize {
        self.relations.iter().map(|r| r.removed).sum()
    }

    pub fn total_duplicates(&self) -> usize {
        self.relations.iter().map(|r| r.duplicates).sum()
    }

    pub fn total_exact_duplicates(&self) -> usize {
        self.relations.iter().map(|r| r.exact_duplicates).sum()
    }

    pub fn retained_relations(&self) -> impl Iterator<Item = &RelationCuration> {
        self.relations.iter().filter(|r| !r.dropped)
    }

    pub fn dropped_relations(&self) -> impl Iterator<Item = &RelationCuration> {
        self.relations.iter().filter(|r| r.dropped)
    }

    /// Plain-text table in the layout of the per-relation duplicate counts.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<8} {:<28} {:>8} {:>11} {:>7} {:>9}  {}\n",
            "Relation", "Name", "#entries", "#duplicates", "#exact", "#retained", "status"
        );
        for r in &self.relations {
            out.push_str(&format!(
                "{:<8} {:<28} {:>8} {:>11} {:>7} {:>9}  {}\n",
                r.relation_id,
                r.name,
                r.entries,
                r.duplicates,
                r.exact_duplicates,
                r.retained,
                if r.dropped {
                    format!("dropped ({:.1}% duplicates)", 100.0 * r.duplicate_rate)
                } else {
                    "kept".to_string()
                }
            ));
        }
        out.push_str(&format!(
            "{:<8} {:<28} {:>8} {:>11} {:>7} {:>9}  {} of {} relations kept\n",
            "Total",
            "",
            self.total_entries(),
            self.total_duplicates(),
            self.total_exact_duplicates(),
            self.total_retained(),
            self.retained_relations().count(),
            self.relations.len()
        ));
        out
    }
}

fn curate_relation(relation: &Relation, drop_threshold: f64) -> (Relation, RelationCuration) {
    let mut key_counts: HashMap<&str, usize> = HashMap::new();
    for t in &relation.tuples {
        *key_counts.entry(t.subject.as_str()).or_default() += 1;
    }
    let mut seen_exact: HashSet<(&str, &str)> = HashSet::new();
    let mut exact_duplicates = 0;
    for t in &relation.tuples {
        if !seen_exact.insert((t.subject.as_str(), t.object_gold.as_str())) {
            exact_duplicates += 1;
        }
    }

    let entries = relation.tuples.len();
    let kept: Vec<_> = relation
        .tuples
        .iter()
        .filter(|t| key_counts[t.subject.as_str()] == 1)
        .cloned()
        .collect();
    let duplicates = entries - kept.len();
    let duplicate_rate = if entries == 0 {
        0.0
    } else {
        duplicates as f64 / entries as f64
    };
    let dropped = duplicate_rate > drop_threshold;

    let curated = Relation {
        spec: relation.spec.clone(),
        tuples: if dropped { Vec::new() } else { kept },
    };
    let retained = curated.tuples.len();
    let report = RelationCuration {
        relation_id: relation.spec.relation_id.clone(),
        name: relation.spec.name.clone(),
        entries,
        duplicates,
        exact_duplicates,
        retained,
        removed: entries - retained,
        duplicate_rate,
        subject_object_rate: curated.subject_object_rate(),
        dropped,
    };
    (curated, report)
}

/// Removes every instance of any `(subject, relation)` key that occurs more
/// than once, then drops relations whose removed fraction exceeds
/// `drop_threshold`. Dropped relations are absent from the returned dataset
/// but listed in the report; relations left with zero facts are kept.
pub fn deduplicate(
    dataset: &Dataset,
    drop_threshold: f64,
) -> Result<(Dataset, CurationReport), CorpusError> {
    if !(drop_threshold > 0.0 && drop_threshold < 1.0) {
        return Err(CorpusError::InvalidThreshold(drop_threshold));
    }
    let mut relations = Vec::new();
    let mut reports = Vec::new();
    for r in &dataset.relations {
        let (curated, report) = curate_relation(r, drop_threshold);
        if !report.dropped {
            relations.push(curated);
        }
        reports.push(report);
    }
    Ok((
        Dataset::new(relations),
        CurationReport {
            drop_threshold,
            relations: reports,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FactTuple, RelationSpec, Template};
    use std::collections::BTreeSet;

    fn relation(tuples: &[(&str, &str)]) -> Relation {
        let mut candidates: Vec<String> = tuples.iter().map(|(_, o)| o.to_string()).collect();
        candidates.sort();
        candidates.dedup();
        Relation {
            spec: RelationSpec {
                relation_id: "r".into(),
                name: "r".into(),
                templates: vec![Template {
                    pattern: "[X] [Y]".into(),
                    lama_original: true,
                    unidiomatic: false,
                }],
                candidates,
                semantic_overlap: false,
                unidiomatic_objects: BTreeSet::new(),
                subject_object_similarity_prone: false,
            },
            tuples: tuples
                .iter()
                .map(|(s, o)| FactTuple::new(*s, "r", *o))
                .collect(),
        }
    }

    #[test]
    fn all_instances_of_duplicated_key_removed() {
        let d = Dataset::new(vec![relation(&[("A", "x"), ("A", "y"), ("B", "z")])]);
        let (out, report) = deduplicate(&d, 0.9).unwrap();
        let subjects: Vec<_> = out.relations[0].tuples.iter().map(|t| &t.subject).collect();
        assert_eq!(subjects, ["B"]);
        assert_eq!(report.relations[0].duplicates, 2);
        assert_eq!(report.relations[0].exact_duplicates, 0);
    }

    #[test]
    fn exact_duplicates_removed_and_counted() {
        let d = Dataset::new(vec![relation(&[("A", "x"), ("A", "x"), ("B", "z")])]);
        let (out, report) = deduplicate(&d, 0.9).unwrap();
        assert_eq!(out.relations[0].tuples.len(), 1);
        assert_eq!(report.relations[0].exact_duplicates, 1);
        assert_eq!(report.relations[0].duplicates, 2);
    }

    #[test]
    fn high_duplicate_rate_drops_relation() {
        let d = Dataset::new(vec![relation(&[("A", "x"), ("A", "y"), ("B", "z")])]);
        let (out, report) = deduplicate(&d, 0.5).unwrap();
        assert!(out.relations.is_empty());
        assert!(report.relations[0].dropped);
        assert_eq!(report.relations[0].retained, 0);
        assert_eq!(report.relations[0].removed, 3);
    }

    #[test]
    fn empty_after_curation_is_kept() {
        let d = Dataset::new(vec![relation(&[])]);
        let (out, report) = deduplicate(&d, 0.2).unwrap();
        assert_eq!(out.relations.len(), 1);
        assert!(out.relations[0].tuples.is_empty());
        assert!(!report.relations[0].dropped);
    }

    #[test]
    fn threshold_must_be_open_unit_interval() {
        let d = Dataset::default();
        assert!(deduplicate(&d, 0.0).is_err());
        assert!(deduplicate(&d, 1.0).is_err());
        assert!(deduplicate(&d, f64::NAN).is_err());
    }
}
