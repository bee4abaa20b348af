//! Synthetic datasets for tests, demos and the acceptance suite.

use std::collections::BTreeSet;

use crate::corpus::{Dataset, FactTuple, Relation, RelationSpec, Template};

/// Per-relation raw counts of the 31 standard N-1 relations:
/// `(relation_id, name, entries, duplicate instances, exact duplicates)`.
pub const DUPLICATE_STATISTICS: &[(&str, &str, usize, usize, usize)] = &[
    ("P17", "located-in", 912, 2, 0),
    ("P19", "born-in", 779, 0, 0),
    ("P20", "died-in", 817, 0, 0),
    ("P27", "citizen-of", 958, 0, 0),
    ("P30", "located-in-continent", 959, 4, 0),
    ("P36", "capital-of", 471, 14, 1),
    ("P37", "official-language", 900, 280, 0),
    ("P101", "specializes-in", 571, 52, 0),
    ("P103", "native-language", 919, 2, 0),
    ("P106", "is-a-by-profession", 821, 0, 0),
    ("P127", "owned-by", 616, 0, 0),
    ("P131", "located-in", 775, 0, 0),
    ("P136", "plays-music", 859, 2, 0),
    ("P138", "named-after", 461, 23, 2),
    ("P140", "affiliated-with-religion", 432, 10, 0),
    ("P159", "headquarter-in", 801, 4, 0),
    ("P176", "produced-by", 925, 19, 8),
    ("P178", "developed-by", 588, 12, 1),
    ("P264", "represented-by-music-label", 53, 2, 0),
    ("P276", "located-in", 764, 74, 1),
    ("P279", "subclass-of", 900, 4, 0),
    ("P361", "part-of", 746, 64, 0),
    ("P364", "original-language", 756, 6, 0),
    ("P407", "written-in-language", 857, 31, 0),
    ("P413", "plays-in-position", 952, 0, 0),
    ("P449", "originally-aired-on", 801, 9, 1),
    ("P495", "created-in", 905, 2, 0),
    ("P740", "founded-in", 843, 0, 0),
    ("P937", "worked-in", 853, 21, 0),
    ("P1376", "capital-of", 179, 8, 1),
    ("P1412", "communicated-in", 924, 2, 0),
];

fn spec(relation_id: &str, name: &str, n_templates: usize, candidates: Vec<String>) -> RelationSpec {
    let templates = (0..n_templates)
        .map(|i| Template {
            pattern: if i == 0 {
                format!("[X] {name} [Y] .")
            } else {
                format!("[X] paraphrase {i} of {name} [Y] .")
            },
            lama_original: i == 0,
            unidiomatic: false,
        })
        .collect();
    RelationSpec {
        relation_id: relation_id.to_string(),
        name: name.to_string(),
        templates,
        candidates,
        semantic_overlap: false,
        unidiomatic_objects: BTreeSet::new(),
        subject_object_similarity_prone: false,
    }
}

/// Builds one relation whose raw facts reproduce the given duplicate counts.
///
/// Exact duplicates are pairs with the same object; the remaining duplicate
/// instances form pairs with different objects, plus one triple when their
/// number is odd.
pub fn relation_with_duplicates(
    relation_id: &str,
    name: &str,
    entries: usize,
    duplicates: usize,
    exact: usize,
) -> Relation {
    assert!(2 * exact <= duplicates, "exact pairs exceed duplicate count");
    let rest = duplicates - 2 * exact;
    assert!(rest != 1, "a single non-exact duplicate instance is impossible");
    assert!(duplicates <= entries);

    let candidates: Vec<String> = (0..8).map(|i| format!("{relation_id}-object-{i}")).collect();
    let obj = |i: usize| candidates[i % candidates.len()].clone();
    let mut tuples = Vec::with_capacity(entries);
    let mut next_subject = 0usize;
    let mut subject = || {
        next_subject += 1;
        format!("{relation_id} subject {next_subject}")
    };

    for _ in 0..exact {
        let s = subject();
        tuples.push(FactTuple::new(s.clone(), relation_id, obj(0)));
        tuples.push(FactTuple::new(s, relation_id, obj(0)));
    }
    let (triples, pairs) = if rest % 2 == 1 { (1, (rest - 3) / 2) } else { (0, rest / 2) };
    for _ in 0..triples {
        let s = subject();
        for k in 0..3 {
            tuples.push(FactTuple::new(s.clone(), relation_id, obj(k)));
        }
    }
    for _ in 0..pairs {
        let s = subject();
        tuples.push(FactTuple::new(s.clone(), relation_id, obj(1)));
        tuples.push(FactTuple::new(s, relation_id, obj(2)));
    }
    let mut i = 0;
    while tuples.len() < entries {
        tuples.push(FactTuple::new(subject(), relation_id, obj(i)));
        i += 1;
    }
    Relation {
        spec: spec(relation_id, name, 2, candidates.clone()),
        tuples,
    }
}

/// The full 31-relation raw dataset matching [`DUPLICATE_STATISTICS`].
pub fn duplicate_statistics_dataset() -> Dataset {
    Dataset::new(
        DUPLICATE_STATISTICS
            .iter()
            .map(|&(id, name, n, d, e)| relation_with_duplicates(id, name, n, d, e))
            .collect(),
    )
}

/// Shape of a uniform toy dataset.
#[derive(Debug, Clone, Copy)]
pub struct ToyShape {
    pub relations: usize,
    pub tuples_per_relation: usize,
    pub candidates: usize,
    pub templates: usize,
}

/// Clean N-1 dataset: relation `R{r}`, subjects `R{r} entity {i}`, candidates
/// `answer-{r}-{k}`, gold cycling through the candidates.
pub fn toy_dataset(shape: ToyShape) -> Dataset {
    let relations = (0..shape.relations)
        .map(|r| {
            let id = format!("R{r}");
            let candidates: Vec<String> =
                (0..shape.candidates).map(|k| format!("answer-{r}-{k}")).collect();
            let tuples = (0..shape.tuples_per_relation)
                .map(|i| {
                    FactTuple::new(
                        format!("{id} entity {i}"),
                        &id,
                        candidates[(i * 7 + r) % shape.candidates].clone(),
                    )
                })
                .collect();
            Relation {
                spec: spec(&id, &format!("relation-{r}"), shape.templates, candidates),
                tuples,
            }
        })
        .collect();
    Dataset::new(relations)
}
