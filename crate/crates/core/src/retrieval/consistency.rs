//! Retriever consistency tables: per-relation mean and spread of each
//! agreement metric, the split by reader agreement, metric-to-metric
//! correlations on random pairs, and the correlation of each metric with
//! reader agreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::baseline::BaselineRun;
use crate::metrics::stats::{macro_summary, mean};
use crate::metrics::{macro_summary_present, pearson, pearson_flag, PairRecord, Summary};

pub const METRIC_NAMES: [&str; 3] = ["id", "title", "emb"];

type Triple = [Option<f64>; 3];

/// Distribution over relations of the per-relation mean (`mu`) and
/// population std (`sigma`) of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub mu: Option<Summary>,
    pub sigma: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub metric: String,
    pub matched: Option<Summary>,
    pub unmatched: Option<Summary>,
}

/// Symmetric matrix over [`METRIC_NAMES`]; each cell summarizes the
/// per-relation Pearson coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<String>,
    pub cells: Vec<Vec<Option<Summary>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverReport {
    pub model: Vec<MetricRow>,
    pub r_all: Vec<MetricRow>,
    pub r_subject: Vec<MetricRow>,
    pub match_split: Vec<MatchRow>,
    pub correlations: CorrelationMatrix,
    /// Pearson between reader agreement and each metric, per relation, summarized.
    pub reader_correlation: Vec<(String, Option<Summary>)>,
}

fn pair_triple(p: &PairRecord) -> Option<Triple> {
    p.id_overlap
        .map(|id| [Some(id), p.title_overlap, p.embedding_similarity])
}

fn group<'a, T>(items: impl IntoIterator<Item = (&'a str, T)>) -> BTreeMap<&'a str, Vec<T>> {
    let mut out: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    for (k, v) in items {
        out.entry(k).or_default().push(v);
    }
    out
}

fn population_std(xs: &[f64]) -> Option<f64> {
    macro_summary(xs).map(|s| s.std)
}

fn metric_rows(groups: &BTreeMap<&str, Vec<Triple>>) -> Vec<MetricRow> {
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let (mut mus, mut sigmas) = (Vec::new(), Vec::new());
            for rows in groups.values() {
                let xs: Vec<f64> = rows.iter().filter_map(|t| t[m]).collect();
                if let (Some(mu), Some(sd)) = (mean(&xs), population_std(&xs)) {
                    mus.push(mu);
                    sigmas.push(sd);
                }
            }
            MetricRow {
                metric: name.to_string(),
                mu: macro_summary(&mus),
                sigma: macro_summary(&sigmas),
            }
        })
        .collect()
}

/// Similarity table rows for annotated model pairs.
pub fn pair_metric_rows(pairs: &[PairRecord]) -> Vec<MetricRow> {
    metric_rows(&group(pairs.iter().filter_map(|p| Some((p.relation_id.as_str(), pair_triple(p)?)))))
}

fn sample_groups(run: &BaselineRun) -> BTreeMap<&str, Vec<Triple>> {
    group(run.samples.iter().map(|s| {
        (
            s.relation_id.as_str(),
            [
                Some(s.metrics.id_overlap),
                Some(s.metrics.title_overlap),
                s.metrics.embedding_similarity,
            ],
        )
    }))
}

/// Similarity table rows for a random baseline.
pub fn baseline_metric_rows(run: &BaselineRun) -> Vec<MetricRow> {
    metric_rows(&sample_groups(run))
}

/// Mean of each metric over agreeing and disagreeing pairs, per relation.
pub fn match_split(pairs: &[PairRecord]) -> Vec<MatchRow> {
    let groups = group(pairs.iter().filter_map(|p| Some((p.relation_id.as_str(), (p.agree, pair_triple(p)?)))));
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let per_rel = |want: bool| {
                macro_summary_present(groups.values().map(|rows| {
                    let xs: Vec<f64> = rows.iter().filter(|(a, _)| *a == want).filter_map(|(_, t)| t[m]).collect();
                    mean(&xs)
                }))
            };
            MatchRow {
                metric: name.to_string(),
                matched: per_rel(true),
                unmatched: per_rel(false),
            }
        })
        .collect()
}

/// Per-relation Pearson between each pair of metrics, summarized.
pub fn correlation_matrix(groups: &BTreeMap<&str, Vec<Triple>>) -> CorrelationMatrix {
    let cell = |a: usize, b: usize| {
        macro_summary_present(groups.values().map(|rows| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|t| Some((t[a]?, t[b]?))).unzip();
            if xs.len() < 2 {
                return None;
            }
            pearson(&xs, &ys).ok().flatten()
        }))
    };
    CorrelationMatrix {
        metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        cells: (0..3).map(|a| (0..3).map(|b| cell(a, b)).collect()).collect(),
    }
}

pub fn baseline_correlations(run: &BaselineRun) -> CorrelationMatrix {
    correlation_matrix(&sample_groups(run))
}

/// Pearson between the agree flag and each metric, per relation, summarized.
pub fn reader_correlations(pairs: &[PairRecord]) -> Vec<(String, Option<Summary>)> {
    let groups = group(pairs.iter().filter_map(|p| Some((p.relation_id.as_str(), (p.agree, pair_triple(p)?)))));
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let s = macro_summary_present(groups.values().map(|rows| {
                let (flags, ys): (Vec<bool>, Vec<f64>) = rows.iter().filter_map(|(a, t)| Some((*a, t[m]?))).unzip();
                if ys.len() < 2 {
                    return None;
                }
                pearson_flag(&flags, &ys).ok().flatten()
            }));
            (name.to_string(), s)
        })
        .collect()
}

/// All retriever tables. `pairs` must already carry retrieval annotations.
pub fn retriever_consistency_report(pairs: &[PairRecord], r_all: &BaselineRun, r_subject: &BaselineRun) -> RetrieverReport {
    RetrieverReport {
        model: pair_metric_rows(pairs),
        r_all: baseline_metric_rows(r_all),
        r_subject: baseline_metric_rows(r_subject),
        match_split: match_split(pairs),
        correlations: baseline_correlations(r_all),
        reader_correlation: reader_correlations(pairs),
    }
}
