//! Random fixtures shared by the property and acceptance targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use factcons::corpus::{Dataset, FactTuple, QueryKey, Relation, RelationSpec, Template};
use factcons::scoring::{Passage, Prediction};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn spec(id: &str, n_templates: usize, candidates: Vec<String>) -> RelationSpec {
    RelationSpec {
        relation_id: id.into(),
        name: id.to_lowercase(),
        templates: (0..n_templates)
            .map(|t| Template {
                pattern: format!("[X] pattern {t} of {id} [Y] ."),
                lama_original: t == 0,
                unidiomatic: false,
            })
            .collect(),
        candidates,
        semantic_overlap: false,
        unidiomatic_objects: BTreeSet::new(),
        subject_object_similarity_prone: false,
    }
}

/// Raw data: subjects drawn from a small pool so that keys repeat.
pub fn raw_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n_rel = rng.gen_range(1..5);
    let relations = (0..n_rel)
        .map(|r| {
            let id = format!("Q{r}");
            let k = rng.gen_range(1..6);
            let candidates: Vec<String> = (0..k).map(|c| format!("obj {r} {c}")).collect();
            let pool = rng.gen_range(1..30);
            let n = rng.gen_range(0..40);
            let tuples = (0..n)
                .map(|_| {
                    let s = format!("subj {}", rng.gen_range(0..pool));
                    let o = candidates.choose(rng).unwrap().clone();
                    FactTuple::new(s, &id, o)
                })
                .collect();
            Relation {
                spec: spec(&id, rng.gen_range(1..5), candidates),
                tuples,
            }
        })
        .collect();
    Dataset::new(relations)
}

/// Clean N-1 data with `templates >= 2`.
pub fn clean_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n_rel = rng.gen_range(1..5);
    let relations = (0..n_rel)
        .map(|r| {
            let id = format!("C{r}");
            let k = rng.gen_range(2..7);
            let candidates: Vec<String> = (0..k).map(|c| format!("obj {r} {c}")).collect();
            let n = rng.gen_range(1..15);
            let tuples = (0..n)
                .map(|i| FactTuple::new(format!("subj {r} {i}"), &id, candidates.choose(rng).unwrap().clone()))
                .collect();
            Relation {
                spec: spec(&id, rng.gen_range(2..6), candidates),
                tuples,
            }
        })
        .collect();
    Dataset::new(relations)
}

pub fn passage(id: &str, title: &str, text: &str) -> Passage {
    Passage {
        passage_id: id.into(),
        title: title.into(),
        text: text.into(),
    }
}

/// Random answers (gold with probability `p_gold`), some queries missing,
/// passages from a small shared pool whose title is a function of the id.
pub fn random_predictions(d: &Dataset, rng: &mut ChaCha8Rng, p_gold: f64, p_missing: f64) -> Vec<Prediction> {
    let pool = rng.gen_range(3..25);
    let mut out = Vec::new();
    for r in &d.relations {
        for t in &r.tuples {
            for ti in 0..r.spec.templates.len() {
                if rng.gen_bool(p_missing) {
                    continue;
                }
                let chosen = if rng.gen_bool(p_gold) {
                    t.object_gold.clone()
                } else {
                    r.spec.candidates.choose(rng).unwrap().clone()
                };
                let n = rng.gen_range(0..6);
                let passages = (0..n)
                    .map(|_| {
                        let id = rng.gen_range(0..pool);
                        passage(&format!("p{id}"), &format!("page {}", id / 3), &format!("text {id}"))
                    })
                    .collect();
                out.push(Prediction {
                    query: QueryKey {
                        relation_id: r.spec.relation_id.clone(),
                        subject: t.subject.clone(),
                        template_index: ti,
                    },
                    scores: r.spec.candidates.iter().map(|c| if *c == chosen { 0.0 } else { -1.0 }).collect(),
                    chosen,
                    passages: Some(passages),
                    query_embedding: Some((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                    free_generation: None,
                });
            }
        }
    }
    out
}
