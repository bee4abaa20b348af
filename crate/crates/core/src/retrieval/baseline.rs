//! Random-pair baselines for the retriever agreement metrics.
//!
//! For every relation, `n_samples` pairs are drawn. The first query of a pair
//! is a uniformly chosen query of that relation; the second is a uniformly
//! chosen query of a different fact, either anywhere (`r-all`) or within the
//! same relation (`r-subject`).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::overlap::{retriever_pair_metrics, RetrieverPairMetrics};
use crate::corpus::QueryKey;
use crate::digest::stable_u64;
use crate::scoring::Prediction;

/// Pairs sampled per relation unless configured otherwise.
pub const DEFAULT_BASELINE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMode {
    #[serde(rename = "r-all")]
    All,
    #[serde(rename = "r-subject")]
    Subject,
}

impl BaselineMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::All => "r-all",
            Self::Subject => "r-subject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSample {
    pub relation_id: String,
    pub a: QueryKey,
    pub b: QueryKey,
    pub metrics: RetrieverPairMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub mode: BaselineMode,
    pub seed: u64,
    pub n_samples: usize,
    pub samples: Vec<BaselineSample>,
    /// Relations with no eligible partner query.
    pub skipped_relations: Vec<String>,
}

fn same_fact(a: &QueryKey, b: &QueryKey) -> bool {
    a.relation_id == b.relation_id && a.subject == b.subject
}

pub fn random_baseline(predictions: &[Prediction], mode: BaselineMode, n_samples: usize, seed: u64) -> BaselineRun {
    let with_passages: Vec<&Prediction> = predictions.iter().filter(|p| p.passages.is_some()).collect();
    let mut by_relation: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in &with_passages {
        by_relation.entry(p.query.relation_id.as_str()).or_default().push(p);
    }

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (rel, mine) in &by_relation {
        let pool: &[&Prediction] = match mode {
            BaselineMode::All => &with_passages,
            BaselineMode::Subject => mine,
        };
        let first = &mine[0].query;
        let has_partner = |anchor: &QueryKey| pool.iter().any(|p| !same_fact(&p.query, anchor));
        // Every anchor needs a partner from another fact.
        let feasible = match mode {
            BaselineMode::Subject => has_partner(first),
            BaselineMode::All => mine.iter().all(|p| has_partner(&p.query)),
        };
        if !feasible {
            skipped.push(rel.to_string());
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stable_u64(seed, &["baseline", mode.label(), rel]));
        for _ in 0..n_samples {
            let a = mine[rng.gen_range(0..mine.len())];
            let b = loop {
                let c = pool[rng.gen_range(0..pool.len())];
                if !same_fact(&c.query, &a.query) {
                    break c;
                }
            };
            if let Some(metrics) = retriever_pair_metrics(a, b) {
                samples.push(BaselineSample {
                    relation_id: rel.to_string(),
                    a: a.query.clone(),
                    b: b.query.clone(),
                    metrics,
                });
            }
        }
    }
    BaselineRun {
        mode,
        seed,
        n_samples,
        samples,
        skipped_relations: skipped,
    }
}
