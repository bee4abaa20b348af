//! Pairwise retriever agreement: passage id overlap, page title overlap and
//! query embedding cosine.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::QueryKey;
use crate::metrics::PairRecord;
use crate::scoring::{Passage, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverPairMetrics {
    pub id_overlap: f64,
    pub title_overlap: f64,
    pub embedding_similarity: Option<f64>,
    /// The two lists had different lengths; overlaps use the longer one.
    pub unequal_counts: bool,
}

/// Size of the multiset intersection of two sequences.
pub fn multiset_intersection<T: Eq + Hash>(a: impl IntoIterator<Item = T>, b: impl IntoIterator<Item = T>) -> usize {
    let mut counts: HashMap<T, usize> = HashMap::new();
    for x in a {
        *counts.entry(x).or_default() += 1;
    }
    let mut n = 0;
    for y in b {
        if let Some(c) = counts.get_mut(&y) {
            if *c > 0 {
                *c -= 1;
                n += 1;
            }
        }
    }
    n
}

/// `(id_overlap, title_overlap, unequal_counts)`; `None` if both lists are empty.
pub fn passage_overlap(a: &[Passage], b: &[Passage]) -> Option<(f64, f64, bool)> {
    let n = a.len().max(b.len());
    if n == 0 {
        return None;
    }
    let ids = multiset_intersection(a.iter().map(|p| &p.passage_id), b.iter().map(|p| &p.passage_id));
    let titles = multiset_intersection(a.iter().map(|p| &p.title), b.iter().map(|p| &p.title));
    Some((ids as f64 / n as f64, titles as f64 / n as f64, a.len() != b.len()))
}

/// Cosine similarity; `None` for mismatched dimensions or a zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Compares the retrieval results of two predictions. `None` unless both
/// carry passages.
pub fn retriever_pair_metrics(a: &Prediction, b: &Prediction) -> Option<RetrieverPairMetrics> {
    let (pa, pb) = (a.passages.as_deref()?, b.passages.as_deref()?);
    let (id_overlap, title_overlap, unequal_counts) = passage_overlap(pa, pb)?;
    let embedding_similarity = match (&a.query_embedding, &b.query_embedding) {
        (Some(x), Some(y)) => cosine(x, y),
        _ => None,
    };
    Some(RetrieverPairMetrics {
        id_overlap,
        title_overlap,
        embedding_similarity,
        unequal_counts,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapDiagnostics {
    pub annotated_pairs: usize,
    pub pairs_without_passages: usize,
    pub unequal_passage_counts: usize,
}

/// Fills the retrieval fields of each pair from the predictions.
pub fn annotate_retrieval(pairs: &mut [PairRecord], predictions: &[Prediction]) -> OverlapDiagnostics {
    let by_key: HashMap<&QueryKey, &Prediction> = predictions.iter().map(|p| (&p.query, p)).collect();
    let mut diag = OverlapDiagnostics::default();
    for pair in pairs.iter_mut() {
        let m = match (by_key.get(&pair.key_i()), by_key.get(&pair.key_j())) {
            (Some(a), Some(b)) => retriever_pair_metrics(a, b),
            _ => None,
        };
        match m {
            Some(m) => {
                diag.annotated_pairs += 1;
                diag.unequal_passage_counts += m.unequal_counts as usize;
                pair.id_overlap = Some(m.id_overlap);
                pair.title_overlap = Some(m.title_overlap);
                pair.embedding_similarity = m.embedding_similarity;
            }
            None => diag.pairs_without_passages += 1,
        }
    }
    diag
}
