//! Deterministic in-process scorers.
//!
//! Every mock derives all randomness from SHA-256 of `(seed, labels...)`, so
//! the same request always yields the same response, across runs and
//! regardless of batching or thread scheduling.
//!
//! Readers:
//!
//! * `oracle`: the gold answer scores highest.
//! * `hash`: scores are a pure function of `(prompt, candidate, seed)`, so
//!   paraphrases pick independent uniform answers.
//! * `parametric,q=Q`: per paraphrase the gold wins with probability `Q`,
//!   otherwise a uniformly drawn other candidate wins.
//! * `fixed,answer=A`: `A` always scores highest (if it is a candidate).
//! * `freq`: scores are candidate term frequencies in the passages the
//!   reader conditions on.
//! * `passage-hash`: scores are a pure function of the passage ids and the
//!   candidate, ignoring the prompt.
//!
//! The retriever side synthesizes, per fact, a canonical list of passages
//! that mention the subject and the gold answer. Each paraphrase reuses the
//! canonical passage in a slot with probability `reuse`, otherwise it gets a
//! paraphrase-specific passage mentioning a random candidate.

use std::collections::HashMap;

use crate::corpus::{Dataset, QueryKey};
use crate::digest::{stable_u64, stable_unit};
use crate::retrieval::rank::term_frequencies;

use super::{Passage, ScoreRequest, ScoreResponse, Scorer, ScoringError};

#[derive(Debug, Clone, PartialEq)]
pub enum MockReader {
    Oracle,
    Hash,
    Parametric { q: f64 },
    Fixed { answer: String },
    Frequency,
    PassageHash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub reader: MockReader,
    /// Probability that a paraphrase reuses the fact's canonical passage in a slot.
    pub reuse: f64,
    /// Put a relation-wide passage in slot 0 of every result.
    pub hub: bool,
    /// Query embedding dimension; 0 disables embeddings.
    pub embedding_dim: usize,
    /// Weight of the template-specific component of the query embedding.
    pub embedding_noise: f64,
    /// Report the argmax answer as the free generation.
    pub free_generation: bool,
    /// Misbehave: never apply forced passages (for testing the echo check).
    pub ignore_forced: bool,
}

impl MockConfig {
    pub fn new(reader: MockReader) -> Self {
        Self {
            reader,
            reuse: 1.0,
            hub: false,
            embedding_dim: 8,
            embedding_noise: 0.3,
            free_generation: true,
            ignore_forced: false,
        }
    }

    /// Parses `NAME[,key=value...]`, e.g. `parametric,q=0.9,reuse=0.6`.
    pub fn parse(spec: &str) -> Result<Self, ScoringError> {
        let mut parts = spec.split(',').map(str::trim);
        let name = parts.next().unwrap_or_default();
        let mut opts: HashMap<&str, &str> = HashMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| ScoringError::Config(format!("mock option {p:?} is not key=value")))?;
            opts.insert(k.trim(), v.trim());
        }
        let num = |key: &str| -> Result<Option<f64>, ScoringError> {
            opts.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| ScoringError::Config(format!("mock option {key}={v} is not a number")))
                })
                .transpose()
        };
        let flag = |key: &str| -> Result<Option<bool>, ScoringError> {
            opts.get(key)
                .map(|v| match *v {
                    "1" | "true" | "yes" | "on" => Ok(true),
                    "0" | "false" | "no" | "off" => Ok(false),
                    _ => Err(ScoringError::Config(format!("mock option {key}={v} is not a boolean"))),
                })
                .transpose()
        };

        let reader = match name {
            "oracle" => MockReader::Oracle,
            "hash" => MockReader::Hash,
            "parametric" => {
                let q = num("q")?
                    .ok_or_else(|| ScoringError::Config("parametric mock needs q=<0..1>".into()))?;
                MockReader::Parametric { q }
            }
            "fixed" => MockReader::Fixed {
                answer: opts
                    .get("answer")
                    .ok_or_else(|| ScoringError::Config("fixed mock needs answer=<candidate>".into()))?
                    .to_string(),
            },
            "freq" => MockReader::Frequency,
            "passage-hash" => MockReader::PassageHash,
            other => return Err(ScoringError::Config(format!("unknown mock kind {other:?}"))),
        };
        let mut cfg = Self::new(reader);
        if let Some(r) = num("reuse")? {
            cfg.reuse = r;
        }
        if let Some(d) = num("dim")? {
            cfg.embedding_dim = d as usize;
        }
        if let Some(n) = num("noise")? {
            cfg.embedding_noise = n;
        }
        if let Some(h) = flag("hub")? {
            cfg.hub = h;
        }
        if let Some(f) = flag("free")? {
            cfg.free_generation = f;
        }
        if let Some(i) = flag("ignore_forced")? {
            cfg.ignore_forced = i;
        }
        let known = ["q", "answer", "reuse", "dim", "noise", "hub", "free", "ignore_forced"];
        if let Some(k) = opts.keys().find(|k| !known.contains(k)) {
            return Err(ScoringError::Config(format!("unknown mock option {k:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if let MockReader::Parametric { q } = self.reader {
            if !(0.0..=1.0).contains(&q) {
                return Err(ScoringError::Config(format!("parametric q={q} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.reuse) {
            return Err(ScoringError::Config(format!("reuse={} outside [0, 1]", self.reuse)));
        }
        Ok(())
    }

    /// Canonical spelling, used as the endpoint identity.
    pub fn canonical(&self) -> String {
        let reader = match &self.reader {
            MockReader::Oracle => "oracle".to_string(),
            MockReader::Hash => "hash".to_string(),
            MockReader::Parametric { q } => format!("parametric,q={q}"),
            MockReader::Fixed { answer } => format!("fixed,answer={answer}"),
            MockReader::Frequency => "freq".to_string(),
            MockReader::PassageHash => "passage-hash".to_string(),
        };
        format!(
            "mock:{reader},reuse={},hub={},dim={},noise={},free={},ignore_forced={}",
            self.reuse,
            self.hub,
            self.embedding_dim,
            self.embedding_noise,
            self.free_generation,
            self.ignore_forced
        )
    }
}

/// In-process scorer. Needs the dataset to know each fact's gold answer.
pub struct MockScorer {
    config: MockConfig,
    seed: u64,
    gold: HashMap<(String, String), String>,
}

impl MockScorer {
    pub fn new(config: MockConfig, seed: u64, dataset: &Dataset) -> Result<Self, ScoringError> {
        config.validate()?;
        Ok(Self {
            config,
            seed,
            gold: dataset.gold_index(),
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn unit(&self, parts: &[&str]) -> f64 {
        stable_unit(self.seed, parts)
    }

    /// The fact's canonical (paraphrase-independent) passage for `slot`.
    fn canonical_passage(&self, key: &QueryKey, gold: &str, candidates: &[String], slot: usize) -> Passage {
        let passage_id = format!("{}|{}|c{slot}", key.relation_id, key.subject);
        let title = format!("{} ({})", key.subject, slot / 4);
        let mut text = format!("{title}. {} is closely associated with {gold} .", key.subject);
        if slot.is_multiple_of(3) && candidates.len() > 1 {
            let others: Vec<&String> = candidates.iter().filter(|c| *c != gold).collect();
            let pick = stable_u64(self.seed, &["distractor", &key.relation_id, &key.subject]) as usize
                % others.len();
            text.push_str(&format!(" It is sometimes confused with {} .", others[pick]));
        }
        Passage {
            passage_id,
            title,
            text,
        }
    }

    fn paraphrase_passage(&self, key: &QueryKey, candidates: &[String], slot: usize) -> Passage {
        let t = key.template_index.to_string();
        let s = slot.to_string();
        let labels = [key.relation_id.as_str(), key.subject.as_str(), t.as_str(), s.as_str()];
        let passage_id = format!("{}|{}|t{t}|{s}", key.relation_id, key.subject);
        // Half of the paraphrase-specific passages come from the same page as
        // the canonical one in that slot.
        let same_page = self.unit(&[&["page"][..], &labels[..]].concat()) < 0.5;
        let title = if same_page {
            format!("{} ({})", key.subject, slot / 4)
        } else {
            format!("{} miscellany {t}-{s}", key.subject)
        };
        let pick = stable_u64(self.seed, &[&["mention"][..], &labels[..]].concat()) as usize
            % candidates.len();
        let text = format!("{title}. {} appears alongside {} .", key.subject, candidates[pick]);
        Passage {
            passage_id,
            title,
            text,
        }
    }

    fn retrieve(&self, key: &QueryKey, gold: &str, candidates: &[String], n: usize) -> Vec<Passage> {
        let t = key.template_index.to_string();
        (0..n)
            .map(|slot| {
                if self.config.hub && slot == 0 {
                    return Passage {
                        passage_id: format!("{}|hub", key.relation_id),
                        title: format!("{} overview", key.relation_id),
                        text: format!("Overview of relation {} .", key.relation_id),
                    };
                }
                let s = slot.to_string();
                let u = self.unit(&["reuse", &key.relation_id, &key.subject, &t, &s]);
                if u < self.config.reuse {
                    self.canonical_passage(key, gold, candidates, slot)
                } else {
                    self.paraphrase_passage(key, candidates, slot)
                }
            })
            .collect()
    }

    fn embedding(&self, key: &QueryKey) -> Vec<f64> {
        let t = key.template_index.to_string();
        let mut v: Vec<f64> = (0..self.config.embedding_dim)
            .map(|d| {
                let d = d.to_string();
                let rel = 2.0 * self.unit(&["emb-rel", &key.relation_id, &d]) - 1.0;
                let subj = 2.0 * self.unit(&["emb-subj", &key.relation_id, &key.subject, &d]) - 1.0;
                let tmpl = 2.0 * self.unit(&["emb-tmpl", &key.relation_id, &key.subject, &t, &d]) - 1.0;
                0.6 * rel + subj + self.config.embedding_noise * tmpl
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    fn score_one(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScoringError> {
        req.validate()?;
        let key = QueryKey::parse_request_id(&req.request_id).ok_or_else(|| {
            ScoringError::protocol(&req.request_id, "mock scorers need relation:template:subject request ids")
        })?;
        let gold = self
            .gold
            .get(&(key.relation_id.clone(), key.subject.clone()))
            .ok_or_else(|| ScoringError::protocol(&req.request_id, "unknown fact"))?;
        let cands = &req.candidates;

        let (passages, applied) = match (&req.forced_passages, self.config.ignore_forced) {
            (Some(forced), false) => (Some(forced.clone()), Some(true)),
            (forced, _) => {
                let own = (req.want_retrieval || matches!(self.config.reader, MockReader::Frequency | MockReader::PassageHash))
                    .then(|| self.retrieve(&key, gold, cands, req.n_passages.max(1)));
                (own, forced.as_ref().map(|_| false))
            }
        };

        let t = key.template_index.to_string();
        let noise = |label: &str, c: &str| self.unit(&[label, &req.request_id, c]);
        let scores: Vec<f64> = match &self.config.reader {
            MockReader::Oracle => cands
                .iter()
                .map(|c| if c == gold { 0.0 } else { -1.0 - noise("oracle", c) })
                .collect(),
            MockReader::Hash => cands
                .iter()
                .map(|c| -10.0 * self.unit(&["hash", &req.prompt, c]))
                .collect(),
            MockReader::Parametric { q } => {
                let coin = self.unit(&["coin", &key.relation_id, &key.subject, &t]);
                let others: Vec<&String> = cands.iter().filter(|c| *c != gold).collect();
                let winner: &str = if coin < *q || others.is_empty() {
                    gold
                } else {
                    let pick = stable_u64(self.seed, &["deviant", &key.relation_id, &key.subject, &t])
                        as usize
                        % others.len();
                    others[pick]
                };
                cands
                    .iter()
                    .map(|c| if c == winner { 0.0 } else { -1.0 - noise("param", c) })
                    .collect()
            }
            MockReader::Fixed { answer } => cands
                .iter()
                .map(|c| if c == answer { 0.0 } else { -1.0 - noise("fixed", c) })
                .collect(),
            MockReader::Frequency => {
                let freqs = term_frequencies(passages.as_deref().unwrap_or_default(), cands);
                freqs.into_iter().map(|f| f as f64).collect()
            }
            MockReader::PassageHash => {
                let ids: Vec<&str> = passages
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .map(|p| p.passage_id.as_str())
                    .collect();
                let joined = ids.join("\u{1f}");
                cands
                    .iter()
                    .map(|c| -self.unit(&["passage-hash", &joined, c]))
                    .collect()
            }
        };

        let free_generation = self
            .config
            .free_generation
            .then(|| super::argmax_first(&scores).map(|i| cands[i].clone()))
            .flatten();
        let query_embedding = (req.want_retrieval && self.config.embedding_dim > 0).then(|| self.embedding(&key));
        Ok(ScoreResponse {
            request_id: req.request_id.clone(),
            scores,
            passages: if req.want_retrieval || req.forced_passages.is_some() {
                passages
            } else {
                None
            },
            query_embedding,
            free_generation,
            forced_passages_applied: applied,
        })
    }
}

impl Scorer for MockScorer {
    fn identity(&self) -> String {
        self.config.canonical()
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScoringError> {
        requests.iter().map(|r| self.score_one(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::select_constrained;
    use crate::synthetic::{toy_dataset, ToyShape};

    fn dataset() -> Dataset {
        toy_dataset(ToyShape {
            relations: 2,
            tuples_per_relation: 6,
            candidates: 5,
            templates: 4,
        })
    }

    fn request(d: &Dataset, rel: usize, tuple: usize, template: usize, retrieval: bool) -> ScoreRequest {
        let r = &d.relations[rel];
        let t = &r.tuples[tuple];
        let key = QueryKey {
            relation_id: r.spec.relation_id.clone(),
            subject: t.subject.clone(),
            template_index: template,
        };
        ScoreRequest {
            request_id: key.request_id(),
            prompt: crate::corpus::render::render_template(&r.spec.templates[template].pattern, &t.subject, "[MASK]"),
            candidates: r.spec.candidates.clone(),
            want_retrieval: retrieval,
            n_passages: 20,
            forced_passages: None,
        }
    }

    fn choose(s: &MockScorer, req: &ScoreRequest) -> String {
        let resp = s.score_batch(std::slice::from_ref(req)).unwrap().remove(0);
        select_constrained(&resp, &req.candidates).unwrap().to_string()
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(MockConfig::parse("oracle").unwrap().reader, MockReader::Oracle);
        assert_eq!(
            MockConfig::parse("parametric,q=0.9").unwrap().reader,
            MockReader::Parametric { q: 0.9 }
        );
        assert_eq!(
            MockConfig::parse("fixed,answer=London").unwrap().reader,
            MockReader::Fixed { answer: "London".into() }
        );
        let c = MockConfig::parse("freq,reuse=0.5,hub=1,dim=4").unwrap();
        assert!(c.hub);
        assert_eq!(c.reuse, 0.5);
        assert_eq!(c.embedding_dim, 4);
    }

    #[test]
    fn parse_errors() {
        assert!(MockConfig::parse("bogus").is_err());
        assert!(MockConfig::parse("parametric").is_err());
        assert!(MockConfig::parse("parametric,q=1.5").is_err());
        assert!(MockConfig::parse("oracle,colour=red").is_err());
        assert!(MockConfig::parse("oracle,hub").is_err());
    }

    #[test]
    fn oracle_picks_gold() {
        let d = dataset();
        let s = MockScorer::new(MockConfig::new(MockReader::Oracle), 1, &d).unwrap();
        for (ri, r) in d.relations.iter().enumerate() {
            for (ti, t) in r.tuples.iter().enumerate() {
                for k in 0..4 {
                    assert_eq!(choose(&s, &request(&d, ri, ti, k, false)), t.object_gold);
                }
            }
        }
    }

    #[test]
    fn parametric_one_matches_oracle() {
        let d = dataset();
        let p = MockScorer::new(MockConfig::new(MockReader::Parametric { q: 1.0 }), 3, &d).unwrap();
        let o = MockScorer::new(MockConfig::new(MockReader::Oracle), 3, &d).unwrap();
        for ti in 0..6 {
            for k in 0..4 {
                let req = request(&d, 0, ti, k, false);
                assert_eq!(choose(&p, &req), choose(&o, &req));
            }
        }
    }

    #[test]
    fn fixed_answer_wins() {
        let d = dataset();
        let cfg = MockConfig::new(MockReader::Fixed { answer: "answer-0-3".into() });
        let s = MockScorer::new(cfg, 0, &d).unwrap();
        assert_eq!(choose(&s, &request(&d, 0, 2, 1, false)), "answer-0-3");
    }

    #[test]
    fn responses_are_deterministic() {
        let d = dataset();
        let a = MockScorer::new(MockConfig::parse("hash,reuse=0.5,hub=1").unwrap(), 9, &d).unwrap();
        let b = MockScorer::new(MockConfig::parse("hash,reuse=0.5,hub=1").unwrap(), 9, &d).unwrap();
        let req = request(&d, 1, 3, 2, true);
        assert_eq!(a.score_batch(std::slice::from_ref(&req)).unwrap(), b.score_batch(&[req]).unwrap());
    }

    #[test]
    fn retrieval_shape() {
        let d = dataset();
        let s = MockScorer::new(MockConfig::parse("oracle,hub=1").unwrap(), 0, &d).unwrap();
        let resp = s.score_batch(&[request(&d, 0, 0, 0, true)]).unwrap().remove(0);
        let passages = resp.passages.unwrap();
        assert_eq!(passages.len(), 20);
        assert_eq!(passages[0].passage_id, "R0|hub");
        assert_eq!(resp.query_embedding.unwrap().len(), 8);
    }

    #[test]
    fn full_reuse_gives_identical_passages_across_templates() {
        let d = dataset();
        let s = MockScorer::new(MockConfig::new(MockReader::Oracle), 0, &d).unwrap();
        let a = s.score_batch(&[request(&d, 0, 1, 0, true)]).unwrap().remove(0);
        let b = s.score_batch(&[request(&d, 0, 1, 3, true)]).unwrap().remove(0);
        assert_eq!(a.passages, b.passages);
    }

    #[test]
    fn forced_passages_are_echoed() {
        let d = dataset();
        let forced = vec![Passage {
            passage_id: "x".into(),
            title: "X".into(),
            text: "answer-0-4 answer-0-4".into(),
        }];
        let mut req = request(&d, 0, 0, 0, true);
        req.forced_passages = Some(forced.clone());
        let s = MockScorer::new(MockConfig::new(MockReader::Frequency), 0, &d).unwrap();
        let resp = s.score_batch(&[req.clone()]).unwrap().remove(0);
        assert_eq!(resp.forced_passages_applied, Some(true));
        assert_eq!(resp.passages.as_ref(), Some(&forced));
        assert_eq!(select_constrained(&resp, &req.candidates).unwrap(), "answer-0-4");

        let bad = MockScorer::new(MockConfig::parse("freq,ignore_forced=1").unwrap(), 0, &d).unwrap();
        let resp = bad.score_batch(&[req]).unwrap().remove(0);
        assert_eq!(resp.forced_passages_applied, Some(false));
    }

    #[test]
    fn frequency_reader_prefers_gold_on_canonical_passages() {
        let d = dataset();
        let s = MockScorer::new(MockConfig::new(MockReader::Frequency), 5, &d).unwrap();
        for ti in 0..6 {
            let req = request(&d, 1, ti, 2, true);
            assert_eq!(choose(&s, &req), d.relations[1].tuples[ti].object_gold);
        }
    }
}
