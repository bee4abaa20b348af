//! Consistency statistics over a set of predictions.
//!
//! Everything is built from [`PairRecord`]s: for each fact, one record per
//! unordered pair of templates. Per-relation numbers pool pairs (or tuples)
//! within the relation; summaries then average relations with equal weight.

pub mod stats;
pub mod strata;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, QueryKey};
use crate::scoring::Prediction;

pub use stats::{fmt_summary, macro_summary, macro_summary_present, pearson, pearson_flag, StatsError, Summary};
pub use strata::{stratify, StratifiedTable, StratumCell};

/// One `(template_i, template_j)` comparison for one fact, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub relation_id: String,
    pub subject: String,
    pub template_i: usize,
    pub template_j: usize,
    pub agree: bool,
    pub correct_i: bool,
    pub correct_j: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_rank_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_rank_mean: Option<f64>,
}

impl PairRecord {
    pub fn key_i(&self) -> QueryKey {
        QueryKey {
            relation_id: self.relation_id.clone(),
            subject: self.subject.clone(),
            template_index: self.template_i,
        }
    }

    pub fn key_j(&self) -> QueryKey {
        QueryKey {
            relation_id: self.relation_id.clone(),
            subject: self.subject.clone(),
            template_index: self.template_j,
        }
    }
}

/// Data problems that were skipped rather than counted as wrong answers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Facts with fewer than two predictions (no pairs possible).
    pub tuples_without_pairs: usize,
    /// Facts with no prediction for the LAMA template.
    pub missing_lama: usize,
    /// Facts with at least one template unanswered.
    pub incomplete_tuples: usize,
    /// Predictions whose key is not a fact/template of the dataset.
    pub unmatched_predictions: usize,
    /// Predictions whose key appeared more than once (the first is kept).
    pub duplicate_predictions: usize,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn merge(&mut self, other: Diagnostics) {
        self.tuples_without_pairs += other.tuples_without_pairs;
        self.missing_lama += other.missing_lama;
        self.incomplete_tuples += other.incomplete_tuples;
        self.unmatched_predictions += other.unmatched_predictions;
        self.duplicate_predictions += other.duplicate_predictions;
        self.notes.extend(other.notes);
    }

    pub fn is_clean(&self) -> bool {
        *self == Diagnostics::default()
    }
}

/// All answers given for one fact.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleOutcome {
    pub relation_id: String,
    pub subject: String,
    pub gold: String,
    pub n_templates: usize,
    pub lama_index: usize,
    /// Chosen answer per template index, only for templates that were scored.
    pub answers: BTreeMap<usize, String>,
}

impl TupleOutcome {
    pub fn is_complete(&self) -> bool {
        self.answers.len() == self.n_templates
    }

    pub fn any_correct(&self) -> bool {
        self.answers.values().any(|a| *a == self.gold)
    }

    /// All `C(n, 2)` template pairs, `i < j` in lexicographic order.
    pub fn pairs(&self) -> Vec<PairRecord> {
        let answered: Vec<(&usize, &String)> = self.answers.iter().collect();
        let mut out = Vec::with_capacity(answered.len() * answered.len().saturating_sub(1) / 2);
        for (a, &(&i, ai)) in answered.iter().enumerate() {
            for &(&j, aj) in &answered[a + 1..] {
                out.push(PairRecord {
                    relation_id: self.relation_id.clone(),
                    subject: self.subject.clone(),
                    template_i: i,
                    template_j: j,
                    agree: ai == aj,
                    correct_i: *ai == self.gold,
                    correct_j: *aj == self.gold,
                    id_overlap: None,
                    title_overlap: None,
                    embedding_similarity: None,
                    pred_rank_mean: None,
                    gold_rank_mean: None,
                });
            }
        }
        out
    }
}

/// Groups predictions by fact, in dataset order (relation, tuple).
pub fn tuple_outcomes(dataset: &Dataset, predictions: &[Prediction]) -> (Vec<TupleOutcome>, Diagnostics) {
    let mut diag = Diagnostics::default();
    let mut by_key: HashMap<&QueryKey, &Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_key.insert(&p.query, p).is_some() {
            diag.duplicate_predictions += 1;
        }
    }
    // Keep the first of any duplicates.
    for p in predictions.iter().rev() {
        by_key.insert(&p.query, p);
    }

    let mut matched = 0usize;
    let mut outcomes = Vec::with_capacity(dataset.n_tuples());
    for relation in &dataset.relations {
        let n_templates = relation.spec.templates.len();
        let lama_index = relation.spec.lama_index();
        for t in &relation.tuples {
            let mut answers = BTreeMap::new();
            for i in 0..n_templates {
                let key = QueryKey {
                    relation_id: relation.spec.relation_id.clone(),
                    subject: t.subject.clone(),
                    template_index: i,
                };
                if let Some(p) = by_key.get(&key) {
                    answers.insert(i, p.chosen.clone());
                    matched += 1;
                }
            }
            let o = TupleOutcome {
                relation_id: relation.spec.relation_id.clone(),
                subject: t.subject.clone(),
                gold: t.object_gold.clone(),
                n_templates,
                lama_index,
                answers,
            };
            if o.answers.len() < 2 {
                diag.tuples_without_pairs += 1;
            }
            if !o.answers.contains_key(&lama_index) {
                diag.missing_lama += 1;
            }
            if !o.is_complete() {
                diag.incomplete_tuples += 1;
            }
            outcomes.push(o);
        }
    }
    diag.unmatched_predictions = by_key.len() - matched;
    (outcomes, diag)
}

/// Pair records for every fact, in dataset order.
pub fn pair_records(dataset: &Dataset, predictions: &[Prediction]) -> (Vec<PairRecord>, Diagnostics) {
    let (outcomes, diag) = tuple_outcomes(dataset, predictions);
    (outcomes.iter().flat_map(TupleOutcome::pairs).collect(), diag)
}

/// Pooled fraction of agreeing pairs. `None` for no pairs.
pub fn relation_consistency<'a>(pairs: impl IntoIterator<Item = &'a PairRecord>) -> Option<f64> {
    let (mut n, mut agree) = (0usize, 0usize);
    for p in pairs {
        n += 1;
        agree += p.agree as usize;
    }
    (n > 0).then(|| agree as f64 / n as f64)
}

/// Fraction of facts whose LAMA-template answer is the gold object, over
/// facts that have a LAMA-template prediction.
pub fn accuracy_lama(outcomes: &[TupleOutcome]) -> Option<f64> {
    let (mut n, mut correct) = (0usize, 0usize);
    for o in outcomes {
        if let Some(a) = o.answers.get(&o.lama_index) {
            n += 1;
            correct += (*a == o.gold) as usize;
        }
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

/// Fraction of facts where every template gave the gold object. Same
/// denominator as [`accuracy_lama`]; a fact with an unanswered template never
/// counts as consistent and accurate.
pub fn consistent_and_accurate(outcomes: &[TupleOutcome]) -> Option<f64> {
    let (mut n, mut all) = (0usize, 0usize);
    for o in outcomes.iter().filter(|o| o.answers.contains_key(&o.lama_index)) {
        n += 1;
        all += (o.is_complete() && o.answers.values().all(|a| *a == o.gold)) as usize;
    }
    (n > 0).then(|| all as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePartition {
    /// Facts with at least one correct answer.
    pub knowledgeable: usize,
    pub unknowledgeable: usize,
    /// Pair agreement within knowledgeable facts.
    pub know_cons: Option<f64>,
    /// Fraction of pairs within knowledgeable facts where both answers are correct.
    pub k_know_cons: Option<f64>,
    /// Pair agreement within unknowledgeable facts.
    pub unk_cons: Option<f64>,
}

/// Splits answered facts by whether any template got the gold object.
pub fn knowledge_partition(outcomes: &[TupleOutcome]) -> KnowledgePartition {
    let (mut know, mut unk) = (0usize, 0usize);
    let (mut k_pairs, mut k_agree, mut k_both) = (0usize, 0usize, 0usize);
    let (mut u_pairs, mut u_agree) = (0usize, 0usize);
    for o in outcomes.iter().filter(|o| !o.answers.is_empty()) {
        let pairs = o.pairs();
        if o.any_correct() {
            know += 1;
            k_pairs += pairs.len();
            k_agree += pairs.iter().filter(|p| p.agree).count();
            k_both += pairs.iter().filter(|p| p.correct_i && p.correct_j).count();
        } else {
            unk += 1;
            u_pairs += pairs.len();
            u_agree += pairs.iter().filter(|p| p.agree).count();
        }
    }
    let frac = |a: usize, n: usize| (n > 0).then(|| a as f64 / n as f64);
    KnowledgePartition {
        knowledgeable: know,
        unknowledgeable: unk,
        know_cons: frac(k_agree, k_pairs),
        k_know_cons: frac(k_both, k_pairs),
        unk_cons: frac(u_agree, u_pairs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub relation_id: String,
    pub n_tuples: usize,
    pub n_pairs: usize,
    pub consistency: Option<f64>,
    pub accuracy: Option<f64>,
    pub consistent_and_accurate: Option<f64>,
    pub knowledgeable: usize,
    pub unknowledgeable: usize,
    pub know_cons: Option<f64>,
    pub k_know_cons: Option<f64>,
    pub unk_cons: Option<f64>,
}

/// Metrics for one relation's facts.
pub fn relation_metrics_for(relation_id: &str, outcomes: &[TupleOutcome]) -> RelationMetrics {
    let pairs: Vec<PairRecord> = outcomes.iter().flat_map(TupleOutcome::pairs).collect();
    let k = knowledge_partition(outcomes);
    RelationMetrics {
        relation_id: relation_id.to_string(),
        n_tuples: outcomes.len(),
        n_pairs: pairs.len(),
        consistency: relation_consistency(&pairs),
        accuracy: accuracy_lama(outcomes),
        consistent_and_accurate: consistent_and_accurate(outcomes),
        knowledgeable: k.knowledgeable,
        unknowledgeable: k.unknowledgeable,
        know_cons: k.know_cons,
        k_know_cons: k.k_know_cons,
        unk_cons: k.unk_cons,
    }
}

/// Macro summaries of every metric across relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub n_relations: usize,
    pub consistency: Option<Summary>,
    pub accuracy: Option<Summary>,
    pub consistent_and_accurate: Option<Summary>,
    pub know_cons: Option<Summary>,
    pub k_know_cons: Option<Summary>,
    pub unk_cons: Option<Summary>,
}

/// Averages each metric over the relations where it is defined.
pub fn summarize(relations: &[RelationMetrics]) -> SummaryMetrics {
    let col = |f: fn(&RelationMetrics) -> Option<f64>| macro_summary_present(relations.iter().map(f));
    SummaryMetrics {
        n_relations: relations.len(),
        consistency: col(|r| r.consistency),
        accuracy: col(|r| r.accuracy),
        consistent_and_accurate: col(|r| r.consistent_and_accurate),
        know_cons: col(|r| r.know_cons),
        k_know_cons: col(|r| r.k_know_cons),
        unk_cons: col(|r| r.unk_cons),
    }
}

/// Per-relation metrics, their summary, and the pair records they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub relations: Vec<RelationMetrics>,
    pub summary: SummaryMetrics,
    pub diagnostics: Diagnostics,
}

pub fn evaluate(dataset: &Dataset, predictions: &[Prediction]) -> (MetricsReport, Vec<PairRecord>) {
    let (outcomes, diagnostics) = tuple_outcomes(dataset, predictions);
    let mut relations = Vec::with_capacity(dataset.relations.len());
    let mut start = 0;
    for r in &dataset.relations {
        let end = start + r.tuples.len();
        relations.push(relation_metrics_for(r.id(), &outcomes[start..end]));
        start = end;
    }
    let pairs = outcomes.iter().flat_map(TupleOutcome::pairs).collect();
    let summary = summarize(&relations);
    (
        MetricsReport {
            relations,
            summary,
            diagnostics,
        },
        pairs,
    )
}
