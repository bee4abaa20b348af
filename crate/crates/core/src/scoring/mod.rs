//! Model-scoring wire protocol, constrained answer selection, and the runner.
//!
//! A scorer receives one [`ScoreRequest`] per rendered query and returns a
//! [`ScoreResponse`] with one score per candidate. Only the ordering of the
//! scores matters: the harness picks the argmax, breaking ties by candidate
//! order. Scorers may be in-process mocks ([`mock`]), a child process speaking
//! JSON lines over stdio, or an HTTP service ([`transport`]).

pub mod cache;
pub mod endpoint;
pub mod mock;
pub mod runner;
pub mod transport;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, QueryKey};

pub use cache::CacheHeader;
pub use endpoint::{build_scorer, EndpointSpec};
pub use mock::{MockConfig, MockReader, MockScorer};
pub use runner::{run_scorer, RetryPolicy, RunOptions, ScoreRun};

/// Passages retrieved per query unless configured otherwise.
pub const DEFAULT_N_PASSAGES: usize = 20;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("protocol error for request {request_id}: {message}")]
    Protocol { request_id: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("endpoint ignored forced passages for request {0}")]
    ForcedPassagesIgnored(String),
    #[error("stale prediction cache {path}: {message}")]
    StaleCache { path: PathBuf, message: String },
    #[error("prediction cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

impl ScoringError {
    pub fn protocol(request_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Protocol {
            request_id: request_id.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub title: String,
    pub text: String,
}

fn default_n_passages() -> usize {
    DEFAULT_N_PASSAGES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub request_id: String,
    pub prompt: String,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub want_retrieval: bool,
    #[serde(default = "default_n_passages")]
    pub n_passages: usize,
    /// Passages the reader must condition on instead of its own retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_passages: Option<Vec<Passage>>,
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.candidates.is_empty() {
            return Err(ScoringError::protocol(&self.request_id, "empty candidate list"));
        }
        if self.want_retrieval && self.n_passages == 0 {
            return Err(ScoringError::protocol(
                &self.request_id,
                "n_passages must be at least 1 when retrieval is requested",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub request_id: String,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passages: Option<Vec<Passage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_generation: Option<String>,
    /// Echo confirming that `forced_passages` were used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_passages_applied: Option<bool>,
}

/// The selected answer for one query, plus whatever the scorer reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query: QueryKey,
    pub chosen: String,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passages: Option<Vec<Passage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_generation: Option<String>,
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= *s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Picks the highest-scoring candidate after checking protocol invariants.
pub fn select_constrained<'a>(
    response: &ScoreResponse,
    candidates: &'a [String],
) -> Result<&'a str, ScoringError> {
    if response.scores.len() != candidates.len() {
        return Err(ScoringError::protocol(
            &response.request_id,
            format!(
                "{} scores for {} candidates",
                response.scores.len(),
                candidates.len()
            ),
        ));
    }
    if let Some(i) = response.scores.iter().position(|s| !s.is_finite()) {
        return Err(ScoringError::protocol(
            &response.request_id,
            format!("score {i} is not finite"),
        ));
    }
    let i = argmax_first(&response.scores)
        .ok_or_else(|| ScoringError::protocol(&response.request_id, "empty candidate list"))?;
    Ok(&candidates[i])
}

/// Free-vs-constrained agreement: over predictions whose free generation is
/// one of the relation's candidates, the fraction where it equals the
/// constrained choice. `None` when that subset is empty.
pub fn check_free_agreement(predictions: &[Prediction], dataset: &Dataset) -> Option<f64> {
    let mut eligible = 0usize;
    let mut matching = 0usize;
    for p in predictions {
        let Some(free) = p.free_generation.as_deref() else {
            continue;
        };
        let Some(relation) = dataset.relation(&p.query.relation_id) else {
            continue;
        };
        if relation.spec.has_candidate(free) {
            eligible += 1;
            if free == p.chosen {
                matching += 1;
            }
        }
    }
    (eligible > 0).then(|| matching as f64 / eligible as f64)
}

/// Scoring backend. Implementations must be usable from several threads.
pub trait Scorer: Send + Sync {
    /// Stable description recorded in cache headers.
    fn identity(&self) -> String;

    /// Scores a batch. Responses may come back in any order.
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError>;
}
