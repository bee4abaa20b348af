//! Batching, retries, response validation and caching around a [`Scorer`].

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::cache::{read_cache, write_cache, CacheHeader, Journal};
use super::{select_constrained, Prediction, ScoreRequest, ScoreResponse, Scorer, ScoringError};
use crate::corpus::{Dataset, Query, QueryKey, DEFAULT_MASK};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total tries per batch, including the first.
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub batch_size: usize,
    /// Batches in flight at once.
    pub concurrency: usize,
    pub n_passages: usize,
    pub want_retrieval: bool,
    pub retry: RetryPolicy,
    pub mask: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            concurrency: 1,
            n_passages: super::DEFAULT_N_PASSAGES,
            want_retrieval: false,
            retry: RetryPolicy::default(),
            mask: DEFAULT_MASK.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreRun {
    /// One per query, in query order.
    pub predictions: Vec<Prediction>,
    /// Requests actually sent to the endpoint.
    pub requests_sent: usize,
    pub cache_hits: usize,
}

/// Builds the wire request for each query. Candidates come from the dataset.
pub fn build_requests(dataset: &Dataset, queries: &[Query], options: &RunOptions) -> Result<Vec<ScoreRequest>, ScoringError> {
    queries
        .iter()
        .map(|q| {
            let relation = dataset.relation(&q.key.relation_id).ok_or_else(|| {
                ScoringError::Config(format!("query for unknown relation {}", q.key.relation_id))
            })?;
            Ok(ScoreRequest {
                request_id: q.key.request_id(),
                prompt: q.prompt.clone(),
                candidates: relation.spec.candidates.clone(),
                want_retrieval: options.want_retrieval,
                n_passages: options.n_passages,
                forced_passages: None,
            })
        })
        .collect()
}

/// Scores `queries`, reusing and extending the cache at `cache` if given.
pub fn run_scorer(
    dataset: &Dataset,
    queries: &[Query],
    scorer: &dyn Scorer,
    options: &RunOptions,
    cache: Option<(&Path, &CacheHeader)>,
) -> Result<ScoreRun, ScoringError> {
    let requests = build_requests(dataset, queries, options)?;
    let keys: Vec<QueryKey> = queries.iter().map(|q| q.key.clone()).collect();
    run_requests(&keys, requests, scorer, options, cache)
}

/// Scores prepared requests; `keys[i]` identifies `requests[i]`.
pub fn run_requests(
    keys: &[QueryKey],
    requests: Vec<ScoreRequest>,
    scorer: &dyn Scorer,
    options: &RunOptions,
    cache: Option<(&Path, &CacheHeader)>,
) -> Result<ScoreRun, ScoringError> {
    assert_eq!(keys.len(), requests.len(), "one key per request");
    if options.batch_size == 0 || options.concurrency == 0 {
        return Err(ScoringError::Config("batch size and concurrency must be at least 1".into()));
    }
    for r in &requests {
        r.validate()?;
    }

    let mut cached: HashMap<QueryKey, Prediction> = HashMap::new();
    if let Some((path, header)) = cache {
        if let Some(contents) = read_cache(path)? {
            if let Some(why) = contents.header.mismatch(header) {
                return Err(ScoringError::StaleCache {
                    path: path.to_path_buf(),
                    message: why,
                });
            }
            cached = contents.predictions.into_iter().map(|p| (p.query.clone(), p)).collect();
        }
    }

    let mut slots: Vec<Option<Prediction>> = keys.iter().map(|k| cached.get(k).cloned()).collect();
    let cache_hits = slots.iter().filter(|s| s.is_some()).count();
    let pending: Vec<usize> = (0..keys.len()).filter(|&i| slots[i].is_none()).collect();
    let batches: Vec<&[usize]> = pending.chunks(options.batch_size).collect();

    let journal = match cache {
        Some((path, header)) if !batches.is_empty() => Some(Mutex::new(Journal::open(path, header)?)),
        _ => None,
    };
    let results = Mutex::new(&mut slots);
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<ScoringError>> = Mutex::new(None);
    let embedding_dim: Mutex<Option<usize>> = Mutex::new(None);

    let work = || {
        while !failed.load(Ordering::SeqCst) {
            let b = next.fetch_add(1, Ordering::SeqCst);
            let Some(batch) = batches.get(b) else { break };
            let outcome = score_with_retry(scorer, batch, &requests, options.retry).and_then(|responses| {
                let preds = to_predictions(batch, keys, &requests, responses, &embedding_dim)?;
                if let Some(j) = &journal {
                    j.lock().expect("journal mutex").append(&preds)?;
                }
                Ok(preds)
            });
            match outcome {
                Ok(preds) => {
                    let mut slots = results.lock().expect("results mutex");
                    for (&i, p) in batch.iter().zip(preds) {
                        slots[i] = Some(p);
                    }
                }
                Err(e) => {
                    failed.store(true, Ordering::SeqCst);
                    first_error.lock().expect("error mutex").get_or_insert(e);
                }
            }
        }
    };
    let workers = options.concurrency.min(batches.len().max(1));
    std::thread::scope(|scope| {
        for _ in 1..workers {
            scope.spawn(work);
        }
        work();
    });
    if let Some(e) = first_error.into_inner().expect("error mutex") {
        return Err(e);
    }

    let predictions: Vec<Prediction> = slots.into_iter().map(|s| s.expect("every query scored")).collect();
    if let Some((path, header)) = cache {
        if !pending.is_empty() || cached.len() != predictions.len() {
            write_cache(path, header, &predictions)?;
        }
    }
    Ok(ScoreRun {
        predictions,
        requests_sent: pending.len(),
        cache_hits,
    })
}

fn score_with_retry(
    scorer: &dyn Scorer,
    batch: &[usize],
    requests: &[ScoreRequest],
    retry: RetryPolicy,
) -> Result<Vec<ScoreResponse>, ScoringError> {
    let reqs: Vec<ScoreRequest> = batch.iter().map(|&i| requests[i].clone()).collect();
    let attempts = retry.attempts.max(1);
    let mut attempt = 0;
    loop {
        match scorer.score_batch(&reqs) {
            Err(ScoringError::Transport(msg)) if attempt + 1 < attempts => {
                let delay = retry.base_delay * 2u32.pow(attempt);
                log::warn!("transport error ({msg}); retrying in {delay:?}");
                std::thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Matches responses to requests by id and validates them.
fn to_predictions(
    batch: &[usize],
    keys: &[QueryKey],
    requests: &[ScoreRequest],
    responses: Vec<ScoreResponse>,
    embedding_dim: &Mutex<Option<usize>>,
) -> Result<Vec<Prediction>, ScoringError> {
    let wanted: HashSet<&str> = batch.iter().map(|&i| requests[i].request_id.as_str()).collect();
    let mut by_id: HashMap<String, ScoreResponse> = HashMap::new();
    for r in responses {
        if !wanted.contains(r.request_id.as_str()) {
            return Err(ScoringError::protocol(&r.request_id, "response for a request not in this batch"));
        }
        if by_id.contains_key(&r.request_id) {
            return Err(ScoringError::protocol(&r.request_id, "duplicate response"));
        }
        by_id.insert(r.request_id.clone(), r);
    }
    batch
        .iter()
        .map(|&i| {
            let req = &requests[i];
            let resp = by_id
                .remove(&req.request_id)
                .ok_or_else(|| ScoringError::protocol(&req.request_id, "no response"))?;
            let chosen = select_constrained(&resp, &req.candidates)?.to_string();
            if req.forced_passages.is_some() && resp.forced_passages_applied != Some(true) {
                return Err(ScoringError::ForcedPassagesIgnored(req.request_id.clone()));
            }
            if let Some(e) = &resp.query_embedding {
                if e.iter().any(|x| !x.is_finite()) {
                    return Err(ScoringError::protocol(&req.request_id, "non-finite embedding"));
                }
                let mut dim = embedding_dim.lock().expect("dim mutex");
                match *dim {
                    None => *dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(ScoringError::protocol(
                            &req.request_id,
                            format!("embedding has dimension {}, earlier ones had {d}", e.len()),
                        ))
                    }
                    Some(_) => {}
                }
            }
            Ok(Prediction {
                query: keys[i].clone(),
                chosen,
                scores: resp.scores,
                // A reader that applied forced passages conditioned on them
                // even if it does not echo them back.
                passages: resp.passages.or_else(|| req.forced_passages.clone()),
                query_embedding: resp.query_embedding,
                free_generation: resp.free_generation,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::render_queries;
    use crate::scoring::{MockConfig, MockReader, MockScorer};
    use crate::synthetic::{toy_dataset, ToyShape};
    use std::sync::atomic::AtomicU32;

    fn dataset() -> Dataset {
        toy_dataset(ToyShape {
            relations: 2,
            tuples_per_relation: 7,
            candidates: 4,
            templates: 3,
        })
    }

    fn queries(d: &Dataset) -> Vec<Query> {
        d.queries(DEFAULT_MASK)
    }

    struct Flaky {
        inner: MockScorer,
        failures_left: AtomicU32,
        calls: AtomicU32,
    }

    impl Scorer for Flaky {
        fn identity(&self) -> String {
            "flaky".into()
        }
        fn score_batch(&self, r: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(ScoringError::Transport("down".into()));
            }
            let mut out = self.inner.score_batch(r)?;
            out.reverse();
            Ok(out)
        }
    }

    fn fast() -> RunOptions {
        RunOptions {
            batch_size: 5,
            retry: RetryPolicy {
                attempts: 3,
                base_delay: Duration::from_millis(1),
            },
            ..RunOptions::default()
        }
    }

    #[test]
    fn oracle_output_in_query_order() {
        let d = dataset();
        let qs = queries(&d);
        let s = MockScorer::new(MockConfig::new(MockReader::Oracle), 1, &d).unwrap();
        let run = run_scorer(&d, &qs, &s, &fast(), None).unwrap();
        let gold = d.gold_index();
        assert_eq!(run.predictions.len(), qs.len());
        for (q, p) in qs.iter().zip(&run.predictions) {
            assert_eq!(p.query, q.key);
            assert_eq!(p.chosen, gold[&(q.key.relation_id.clone(), q.key.subject.clone())]);
        }
    }

    #[test]
    fn reordered_responses_and_retry() {
        let d = dataset();
        let qs = queries(&d);
        let s = Flaky {
            inner: MockScorer::new(MockConfig::new(MockReader::Hash), 1, &d).unwrap(),
            failures_left: AtomicU32::new(2),
            calls: AtomicU32::new(0),
        };
        let run = run_scorer(&d, &qs, &s, &fast(), None).unwrap();
        let direct = MockScorer::new(MockConfig::new(MockReader::Hash), 1, &d).unwrap();
        let expect = run_scorer(&d, &qs, &direct, &fast(), None).unwrap();
        assert_eq!(run.predictions, expect.predictions);
    }

    #[test]
    fn retries_exhausted_is_transport_error() {
        let d = dataset();
        let qs = queries(&d);
        let s = Flaky {
            inner: MockScorer::new(MockConfig::new(MockReader::Hash), 1, &d).unwrap(),
            failures_left: AtomicU32::new(3),
            calls: AtomicU32::new(0),
        };
        assert!(matches!(run_scorer(&d, &qs, &s, &fast(), None), Err(ScoringError::Transport(_))));
        assert_eq!(s.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn concurrent_matches_serial() {
        let d = dataset();
        let qs = queries(&d);
        let s = MockScorer::new(MockConfig::new(MockReader::Hash), 4, &d).unwrap();
        let serial = run_scorer(&d, &qs, &s, &fast(), None).unwrap();
        let par = run_scorer(&d, &qs, &s, &RunOptions { concurrency: 4, ..fast() }, None).unwrap();
        assert_eq!(serial.predictions, par.predictions);
    }

    #[test]
    fn warm_cache_sends_nothing_and_is_byte_stable() {
        let d = dataset();
        let qs = queries(&d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let s = MockScorer::new(MockConfig::new(MockReader::Hash), 1, &d).unwrap();
        let header = CacheHeader::new(s.identity(), 1, 20, false, d.digest());
        let cold = run_scorer(&d, &qs, &s, &fast(), Some((&path, &header))).unwrap();
        assert_eq!(cold.requests_sent, qs.len());
        let bytes = std::fs::read(&path).unwrap();
        let warm = run_scorer(&d, &qs, &s, &fast(), Some((&path, &header))).unwrap();
        assert_eq!(warm.requests_sent, 0);
        assert_eq!(warm.cache_hits, qs.len());
        assert_eq!(warm.predictions, cold.predictions);
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn partial_cache_resumes() {
        let d = dataset();
        let qs = queries(&d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let s = MockScorer::new(MockConfig::new(MockReader::Hash), 1, &d).unwrap();
        let header = CacheHeader::new(s.identity(), 1, 20, false, d.digest());
        run_scorer(&d, &qs[..10], &s, &fast(), Some((&path, &header))).unwrap();
        let full = run_scorer(&d, &qs, &s, &fast(), Some((&path, &header))).unwrap();
        assert_eq!(full.cache_hits, 10);
        assert_eq!(full.requests_sent, qs.len() - 10);
        let fresh = run_scorer(&d, &qs, &s, &fast(), None).unwrap();
        assert_eq!(full.predictions, fresh.predictions);
    }

    #[test]
    fn stale_header_rejected() {
        let d = dataset();
        let qs = queries(&d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let s = MockScorer::new(MockConfig::new(MockReader::Hash), 1, &d).unwrap();
        let header = CacheHeader::new(s.identity(), 1, 20, false, d.digest());
        run_scorer(&d, &qs, &s, &fast(), Some((&path, &header))).unwrap();
        let other = CacheHeader { seed: 2, ..header };
        assert!(matches!(
            run_scorer(&d, &qs, &s, &fast(), Some((&path, &other))),
            Err(ScoringError::StaleCache { .. })
        ));
    }

    struct BadLine;
    impl Scorer for BadLine {
        fn identity(&self) -> String {
            "bad".into()
        }
        fn score_batch(&self, r: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError> {
            Ok(r.iter()
                .enumerate()
                .map(|(i, q)| ScoreResponse {
                    request_id: q.request_id.clone(),
                    scores: if i == 2 { vec![0.0] } else { vec![0.0; q.candidates.len()] },
                    passages: None,
                    query_embedding: None,
                    free_generation: None,
                    forced_passages_applied: None,
                })
                .collect())
        }
    }

    #[test]
    fn bad_response_names_request() {
        let d = dataset();
        let qs = queries(&d);
        let err = run_scorer(&d, &qs, &BadLine, &fast(), None).unwrap_err();
        match err {
            ScoringError::Protocol { request_id, .. } => assert_eq!(request_id, qs[2].key.request_id()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn render_count_matches() {
        let d = dataset();
        let r = &d.relations[0];
        assert_eq!(render_queries(&r.spec, &r.tuples, DEFAULT_MASK).len(), 7 * 3);
    }
}
