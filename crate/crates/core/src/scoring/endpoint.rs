//! Endpoint specs (`mock:NAME`, `exec:CMD`, `http:URL`) and a stdio server
//! loop that exposes any [`Scorer`] over the wire protocol.

use std::io::{BufRead, Write};
use std::time::Duration;

use super::mock::{MockConfig, MockScorer};
use super::transport::{ExecScorer, HttpScorer};
use super::{ScoreRequest, ScoreResponse, Scorer, ScoringError};
use crate::corpus::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub enum EndpointSpec {
    Mock(MockConfig),
    Exec(String),
    Http(String),
}

impl EndpointSpec {
    pub fn parse(spec: &str) -> Result<Self, ScoringError> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| ScoringError::Config(format!("endpoint {spec:?} must look like mock:NAME, exec:CMD or http:URL")))?;
        if rest.trim().is_empty() {
            return Err(ScoringError::Config(format!("endpoint {spec:?} has an empty target")));
        }
        match kind {
            "mock" => Ok(Self::Mock(MockConfig::parse(rest)?)),
            "exec" => Ok(Self::Exec(rest.to_string())),
            // `http:http://host/path` and `http://host/path` are both accepted.
            "http" | "https" if rest.starts_with("//") => Ok(Self::Http(spec.to_string())),
            "http" => Ok(Self::Http(rest.to_string())),
            other => Err(ScoringError::Config(format!("unknown endpoint kind {other:?}"))),
        }
    }

    /// Stable identity recorded in cache headers.
    pub fn identity(&self) -> String {
        match self {
            Self::Mock(c) => c.canonical(),
            Self::Exec(cmd) => format!("exec:{cmd}"),
            Self::Http(url) => format!("http:{url}"),
        }
    }
}

/// Instantiates a scorer. Mocks need the dataset for gold answers.
pub fn build_scorer(
    spec: &EndpointSpec,
    seed: u64,
    dataset: &Dataset,
    timeout: Duration,
) -> Result<Box<dyn Scorer>, ScoringError> {
    Ok(match spec {
        EndpointSpec::Mock(c) => Box::new(MockScorer::new(c.clone(), seed, dataset)?),
        EndpointSpec::Exec(cmd) => Box::new(ExecScorer::new(cmd.clone())),
        EndpointSpec::Http(url) => Box::new(HttpScorer::new(url.clone(), timeout)),
    })
}

/// Answers JSON-lines requests from `input` one at a time until EOF.
///
/// Unparseable lines and scorer errors are answered with an empty-score
/// response so the client sees a protocol error for that request id.
pub fn serve_lines(scorer: &dyn Scorer, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<ScoreRequest>(&line) {
            Ok(req) => match scorer.score_batch(std::slice::from_ref(&req)) {
                Ok(mut rs) if rs.len() == 1 => rs.remove(0),
                Ok(_) | Err(_) => empty_response(req.request_id),
            },
            Err(_) => empty_response(String::new()),
        };
        writeln!(output, "{}", serde_json::to_string(&response).expect("response serializes"))?;
        output.flush()?;
    }
    Ok(())
}

fn empty_response(request_id: String) -> ScoreResponse {
    ScoreResponse {
        request_id,
        scores: Vec::new(),
        passages: None,
        query_embedding: None,
        free_generation: None,
        forced_passages_applied: None,
    }
}
