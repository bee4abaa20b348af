//! Frequency rank of an answer among the candidates, by how often each
//! candidate is mentioned in the retrieved passages.
//!
//! Counting is whole-token, case-insensitive and non-overlapping; a
//! multi-word candidate matches as a contiguous token sequence. Candidates are
//! ordered by count, descending, and tied candidates share the mean of the
//! positions they span. The rank is normalized to `[0, 1]` by `(n - 1)`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, QueryKey};
use crate::metrics::{macro_summary_present, pearson_flag, PairRecord, Summary};
use crate::scoring::{Passage, Prediction};

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Non-overlapping occurrences of `needle` in `hay`, scanning left to right.
fn count_sequence(hay: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    let (mut i, mut n) = (0, 0);
    while i + needle.len() <= hay.len() {
        if hay[i..i + needle.len()] == *needle {
            n += 1;
            i += needle.len();
        } else {
            i += 1;
        }
    }
    n
}

/// Mentions of each candidate across all passage texts, aligned with
/// `candidates`. Passages are counted separately, so a match never spans two.
pub fn term_frequencies(passages: &[Passage], candidates: &[String]) -> Vec<usize> {
    let texts: Vec<Vec<String>> = passages.iter().map(|p| tokens(&p.text)).collect();
    candidates
        .iter()
        .map(|c| {
            let needle = tokens(c);
            texts.iter().map(|t| count_sequence(t, &needle)).sum()
        })
        .collect()
}

/// Normalized fractional rank of `freqs[index]` among `freqs`.
pub fn normalized_rank(freqs: &[usize], index: usize) -> f64 {
    let n = freqs.len();
    if n <= 1 {
        return 0.0;
    }
    let f = freqs[index];
    let above = freqs.iter().filter(|&&g| g > f).count();
    let tied = freqs.iter().filter(|&&g| g == f).count();
    // Positions above+1 ..= above+tied, averaged.
    let rank = above as f64 + (tied as f64 + 1.0) / 2.0;
    (rank - 1.0) / (n - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub query: QueryKey,
    pub pred_rank: f64,
    pub gold_rank: f64,
    pub candidate_frequencies: BTreeMap<String, usize>,
}

/// Ranks the prediction and the gold object among `candidates`. An answer
/// outside the candidate list gets rank 1.
pub fn frequency_rank(prediction: &Prediction, candidates: &[String], gold: &str) -> RankRecord {
    let passages = prediction.passages.as_deref().unwrap_or_default();
    let freqs = term_frequencies(passages, candidates);
    let rank_of = |answer: &str| {
        candidates
            .iter()
            .position(|c| c == answer)
            .map(|i| normalized_rank(&freqs, i))
            .unwrap_or(1.0)
    };
    RankRecord {
        query: prediction.query.clone(),
        pred_rank: rank_of(&prediction.chosen),
        gold_rank: rank_of(gold),
        candidate_frequencies: candidates.iter().cloned().zip(freqs.iter().copied()).collect(),
    }
}

/// Rank records for every prediction that carries passages, in input order.
pub fn rank_records(dataset: &Dataset, predictions: &[Prediction]) -> Vec<RankRecord> {
    let gold = dataset.gold_index();
    predictions
        .iter()
        .filter(|p| p.passages.is_some())
        .filter_map(|p| {
            let relation = dataset.relation(&p.query.relation_id)?;
            let g = gold.get(&(p.query.relation_id.clone(), p.query.subject.clone()))?;
            Some(frequency_rank(p, &relation.spec.candidates, g))
        })
        .collect()
}

/// Fills `pred_rank_mean` / `gold_rank_mean` on pairs whose two queries both
/// have a rank record.
pub fn annotate_ranks(pairs: &mut [PairRecord], records: &[RankRecord]) {
    let by_key: HashMap<&QueryKey, &RankRecord> = records.iter().map(|r| (&r.query, r)).collect();
    for p in pairs.iter_mut() {
        let (ki, kj) = (p.key_i(), p.key_j());
        if let (Some(a), Some(b)) = (by_key.get(&ki), by_key.get(&kj)) {
            p.pred_rank_mean = Some((a.pred_rank + b.pred_rank) / 2.0);
            p.gold_rank_mean = Some((a.gold_rank + b.gold_rank) / 2.0);
        }
    }
}

/// Mean rank over all pairs, agreeing pairs and disagreeing pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RankCells<T> {
    pub rank: T,
    pub matched: T,
    pub unmatched: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRanks {
    pub relation_id: String,
    pub n_pairs: usize,
    pub pred: RankCells<Option<f64>>,
    pub gold: RankCells<Option<f64>>,
    /// Pearson between the agree flag and the pair's mean prediction rank.
    pub pred_correlation: Option<f64>,
    pub gold_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub relations: Vec<RelationRanks>,
    pub pred: RankCells<Option<Summary>>,
    pub gold: RankCells<Option<Summary>>,
    pub pred_correlation: Option<Summary>,
    pub gold_correlation: Option<Summary>,
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    crate::metrics::stats::mean(&v)
}

/// Per-relation rank table and correlations with agreement, then macro summaries.
pub fn rank_consistency_report(records: &[RankRecord], pairs: &[PairRecord]) -> RankReport {
    let mut annotated = pairs.to_vec();
    annotate_ranks(&mut annotated, records);

    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&PairRecord>> = HashMap::new();
    for p in annotated.iter().filter(|p| p.pred_rank_mean.is_some()) {
        groups
            .entry(p.relation_id.as_str())
            .or_insert_with(|| {
                order.push(p.relation_id.as_str());
                Vec::new()
            })
            .push(p);
    }

    let relations: Vec<RelationRanks> = order
        .iter()
        .map(|rel| {
            let ps = &groups[rel];
            let cells = |f: fn(&PairRecord) -> Option<f64>| RankCells {
                rank: mean_of(ps.iter().filter_map(|p| f(p))),
                matched: mean_of(ps.iter().filter(|p| p.agree).filter_map(|p| f(p))),
                unmatched: mean_of(ps.iter().filter(|p| !p.agree).filter_map(|p| f(p))),
            };
            let flags: Vec<bool> = ps.iter().map(|p| p.agree).collect();
            let corr = |f: fn(&PairRecord) -> Option<f64>| {
                let ys: Vec<f64> = ps.iter().filter_map(|p| f(p)).collect();
                if ys.len() < 2 {
                    return None;
                }
                pearson_flag(&flags, &ys).ok().flatten()
            };
            RelationRanks {
                relation_id: rel.to_string(),
                n_pairs: ps.len(),
                pred: cells(|p| p.pred_rank_mean),
                gold: cells(|p| p.gold_rank_mean),
                pred_correlation: corr(|p| p.pred_rank_mean),
                gold_correlation: corr(|p| p.gold_rank_mean),
            }
        })
        .collect();

    let summarize = |f: fn(&RankCells<Option<f64>>) -> Option<f64>, pick: fn(&RelationRanks) -> &RankCells<Option<f64>>| {
        macro_summary_present(relations.iter().map(|r| f(pick(r))))
    };
    let cells = |pick: fn(&RelationRanks) -> &RankCells<Option<f64>>| RankCells {
        rank: summarize(|c| c.rank, pick),
        matched: summarize(|c| c.matched, pick),
        unmatched: summarize(|c| c.unmatched, pick),
    };
    RankReport {
        pred: cells(|r| &r.pred),
        gold: cells(|r| &r.gold),
        pred_correlation: macro_summary_present(relations.iter().map(|r| r.pred_correlation)),
        gold_correlation: macro_summary_present(relations.iter().map(|r| r.gold_correlation)),
        relations,
    }
}
