//! Retrieval diagnostics: retriever agreement between paraphrases, random
//! baselines, forced-passage interventions and frequency ranks.

pub mod baseline;
pub mod consistency;
pub mod intervention;
pub mod overlap;
pub mod rank;

use thiserror::Error;

use crate::scoring::ScoringError;

pub use baseline::{random_baseline, BaselineMode, BaselineRun, DEFAULT_BASELINE_SAMPLES};
pub use consistency::{retriever_consistency_report, RetrieverReport};
pub use intervention::{plan_intervention, run_intervention, InterventionMode, InterventionPlan};
pub use overlap::{annotate_retrieval, cosine, passage_overlap, retriever_pair_metrics, RetrieverPairMetrics};
pub use rank::{frequency_rank, rank_consistency_report, rank_records, term_frequencies, RankRecord, RankReport};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("no retrieved passages for {0}")]
    MissingPassages(String),
    #[error("invalid intervention plan: {0}")]
    Plan(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}
