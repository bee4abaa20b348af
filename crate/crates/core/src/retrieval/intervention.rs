//! Retrieval interventions: every paraphrase of a fact is scored against the
//! same forced passage list.
//!
//! * `relevant`: the fact's own retrieval for the LAMA template.
//! * `irr_cohesive`: the LAMA-template retrieval of another subject of the
//!   same relation, chosen from the seed.
//! * `irr_incohesive`: passages drawn without replacement from every distinct
//!   passage retrieved in the baseline run.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::corpus::{Dataset, QueryKey};
use crate::digest::{sha256_hex, stable_u64};
use crate::scoring::cache::CacheHeader;
use crate::scoring::runner::{build_requests, run_requests};
use crate::scoring::{Passage, Prediction, RunOptions, ScoreRun, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionMode {
    Relevant,
    IrrCohesive,
    IrrIncohesive,
}

impl InterventionMode {
    pub const ALL: [InterventionMode; 3] = [Self::Relevant, Self::IrrCohesive, Self::IrrIncohesive];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Relevant => "relevant",
            Self::IrrCohesive => "irr_cohesive",
            Self::IrrIncohesive => "irr_incohesive",
        }
    }

    /// Row label in the comparison table.
    pub fn label(self) -> &'static str {
        match self {
            Self::Relevant => "relevant",
            Self::IrrCohesive => "irr cohesive",
            Self::IrrIncohesive => "irr incohesive",
        }
    }
}

impl fmt::Display for InterventionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionMode {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "relevant" => Ok(Self::Relevant),
            "irr_cohesive" => Ok(Self::IrrCohesive),
            "irr_incohesive" => Ok(Self::IrrIncohesive),
            _ => Err(RetrievalError::Config(format!(
                "unknown intervention mode {s:?} (expected relevant, irr_cohesive or irr_incohesive)"
            ))),
        }
    }
}

/// The forced passages for one fact, shared by all of its templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub relation_id: String,
    pub subject: String,
    /// Query whose retrieval was copied; absent for random passages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor: Option<QueryKey>,
    pub passages: Vec<Passage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    pub mode: InterventionMode,
    pub seed: u64,
    pub n_passages: usize,
    /// Facts left out, with the reason.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPlan {
    pub header: PlanHeader,
    pub entries: Vec<PlanEntry>,
}

impl InterventionPlan {
    /// JSON lines: the header, then one entry per fact.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("plan header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("plan entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RetrievalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: PlanHeader = serde_json::from_str(lines.next().ok_or_else(|| RetrievalError::Plan("empty plan".into()))?)
            .map_err(|e| RetrievalError::Plan(format!("line 1: {e}")))?;
        let entries = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| RetrievalError::Plan(format!("line {}: {e}", i + 2))))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, entries })
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    /// Forced passages per query key, for every template of every planned fact.
    pub fn forced_for(&self, dataset: &Dataset) -> HashMap<QueryKey, &[Passage]> {
        let mut out = HashMap::new();
        for e in &self.entries {
            let Some(r) = dataset.relation(&e.relation_id) else { continue };
            for t in 0..r.spec.templates.len() {
                out.insert(
                    QueryKey {
                        relation_id: e.relation_id.clone(),
                        subject: e.subject.clone(),
                        template_index: t,
                    },
                    e.passages.as_slice(),
                );
            }
        }
        out
    }
}

/// Builds the plan from baseline predictions that carry passages.
pub fn plan_intervention(
    dataset: &Dataset,
    predictions: &[Prediction],
    mode: InterventionMode,
    seed: u64,
    n_passages: usize,
) -> Result<InterventionPlan, RetrievalError> {
    let by_key: HashMap<&QueryKey, &Prediction> = predictions.iter().map(|p| (&p.query, p)).collect();
    let retrieval_of = |key: &QueryKey| -> Result<Vec<Passage>, RetrievalError> {
        by_key
            .get(key)
            .and_then(|p| p.passages.clone())
            .ok_or_else(|| RetrievalError::MissingPassages(key.request_id()))
    };

    let pool: Vec<Passage> = if mode == InterventionMode::IrrIncohesive {
        let mut distinct: BTreeMap<&str, &Passage> = BTreeMap::new();
        for p in predictions {
            for passage in p.passages.iter().flatten() {
                distinct.entry(passage.passage_id.as_str()).or_insert(passage);
            }
        }
        distinct.into_values().cloned().collect()
    } else {
        Vec::new()
    };
    if mode == InterventionMode::IrrIncohesive && pool.is_empty() && dataset.n_tuples() > 0 {
        return Err(RetrievalError::MissingPassages("no passages in the baseline run".into()));
    }

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for relation in &dataset.relations {
        let lama = relation.spec.lama_index();
        let lama_key = |subject: &str| QueryKey {
            relation_id: relation.spec.relation_id.clone(),
            subject: subject.to_string(),
            template_index: lama,
        };
        for (ti, t) in relation.tuples.iter().enumerate() {
            let (donor, passages) = match mode {
                InterventionMode::Relevant => {
                    let k = lama_key(&t.subject);
                    let ps = retrieval_of(&k)?;
                    (Some(k), ps)
                }
                InterventionMode::IrrCohesive => {
                    let others: Vec<usize> = (0..relation.tuples.len())
                        .filter(|&j| j != ti && relation.tuples[j].subject != t.subject)
                        .collect();
                    if others.is_empty() {
                        skipped.push(format!(
                            "{}:{}: no other subject in the relation",
                            relation.spec.relation_id, t.subject
                        ));
                        continue;
                    }
                    let pick = stable_u64(seed, &["irr_cohesive", &relation.spec.relation_id, &t.subject]) as usize
                        % others.len();
                    let k = lama_key(&relation.tuples[others[pick]].subject);
                    let ps = retrieval_of(&k)?;
                    (Some(k), ps)
                }
                InterventionMode::IrrIncohesive => {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(stable_u64(seed, &["irr_incohesive", &relation.spec.relation_id, &t.subject]));
                    let n = n_passages.min(pool.len());
                    let ps = rand::seq::index::sample(&mut rng, pool.len(), n)
                        .into_iter()
                        .map(|i| pool[i].clone())
                        .collect();
                    (None, ps)
                }
            };
            entries.push(PlanEntry {
                relation_id: relation.spec.relation_id.clone(),
                subject: t.subject.clone(),
                donor,
                passages,
            });
        }
    }
    Ok(InterventionPlan {
        header: PlanHeader {
            mode,
            seed,
            n_passages,
            skipped,
        },
        entries,
    })
}

/// Scores every template of every planned fact with its forced passages.
/// Queries are in dataset order.
pub fn run_intervention(
    dataset: &Dataset,
    plan: &InterventionPlan,
    scorer: &dyn Scorer,
    options: &RunOptions,
    cache: Option<(&Path, &CacheHeader)>,
) -> Result<ScoreRun, RetrievalError> {
    let forced = plan.forced_for(dataset);
    let queries: Vec<_> = dataset
        .queries(&options.mask)
        .into_iter()
        .filter(|q| forced.contains_key(&q.key))
        .collect();
    let mut requests = build_requests(dataset, &queries, options)?;
    for (req, q) in requests.iter_mut().zip(&queries) {
        req.forced_passages = Some(forced[&q.key].to_vec());
    }
    let keys: Vec<QueryKey> = queries.into_iter().map(|q| q.key).collect();
    Ok(run_requests(&keys, requests, scorer, options, cache)?)
}
