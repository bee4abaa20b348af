//! Table rendering. Each report is a list of [`Table`]s that render to
//! aligned text or CSV; JSON output serializes the underlying structures.

use serde::{Deserialize, Serialize};

use crate::corpus::CurationReport;
use crate::metrics::{fmt_summary, StratifiedTable, Summary, SummaryMetrics};
use crate::retrieval::consistency::{CorrelationMatrix, RetrieverReport};
use crate::retrieval::RankReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown format {s:?} (expected text, json or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem for per-table outputs, e.g. `consistency`.
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, title: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
        self
    }

    /// Left-aligned first column, right-aligned others, two-space gutters.
    pub fn to_text(&self) -> String {
        let n = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                let pad = w - c.chars().count();
                if i == 0 {
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str("  ");
                    s.push_str(&" ".repeat(pad));
                    s.push_str(c);
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&self.header));
        let rule: usize = widths.iter().sum::<usize>() + 2 * n.saturating_sub(1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// All tables as one text document, separated by blank lines.
pub fn render_text(tables: &[Table]) -> String {
    tables.iter().map(Table::to_text).collect::<Vec<_>>().join("\n")
}

/// Cons / Acc / C & A per labelled run.
pub fn consistency_table(name: &str, first_column: &str, rows: &[(String, &SummaryMetrics)]) -> Table {
    let mut t = Table::new(name, "Consistency, accuracy and consistent-and-accurate (macro mean ± std over relations)", &[first_column, "Cons", "Acc", "C & A"]);
    for (label, s) in rows {
        t.row(vec![
            label.clone(),
            fmt_summary(s.consistency),
            fmt_summary(s.accuracy),
            fmt_summary(s.consistent_and_accurate),
        ]);
    }
    t
}

/// Know Cons / K-know Cons / Unk Cons per labelled run.
pub fn knowledge_table(rows: &[(String, &SummaryMetrics)]) -> Table {
    let mut t = Table::new("knowledge", "Consistency split by whether any template was correct", &["Model", "Know Cons", "K-know Cons", "Unk Cons"]);
    for (label, s) in rows {
        t.row(vec![
            label.clone(),
            fmt_summary(s.know_cons),
            fmt_summary(s.k_know_cons),
            fmt_summary(s.unk_cons),
        ]);
    }
    t
}

/// One table per form issue, one row per labelled run.
pub fn strata_tables(rows: &[(String, &[StratifiedTable])]) -> Vec<Table> {
    let Some((_, first)) = rows.first() else { return Vec::new() };
    first
        .iter()
        .enumerate()
        .map(|(k, shape)| {
            let mut header = vec!["Model".to_string()];
            header.extend(shape.cells.iter().map(|c| c.label.clone()));
            let mut t = Table {
                name: format!("strata_{}", shape.issue),
                title: format!(
                    "Pairwise consistency by {} ({} relations)",
                    shape.issue.replace('_', " "),
                    shape.relations.len()
                ),
                header,
                rows: Vec::new(),
            };
            for (label, tables) in rows {
                let mut r = vec![label.clone()];
                r.extend(tables[k].cells.iter().map(|c| fmt_summary(c.summary)));
                t.rows.push(r);
            }
            t
        })
        .collect()
}

/// Long-format points for plotting form effects: model, issue, stratum, value.
pub fn form_effects_csv(rows: &[(String, &[StratifiedTable])]) -> String {
    let mut t = Table::new("form_effects", "", &["model", "issue", "stratum", "mean", "std", "n_relations", "n_pairs"]);
    for (label, tables) in rows {
        for table in *tables {
            for c in &table.cells {
                let (m, s, n) = match c.summary {
                    Some(Summary { mean, std, n }) => (format!("{mean:.6}"), format!("{std:.6}"), n.to_string()),
                    None => (String::new(), String::new(), "0".to_string()),
                };
                t.row(vec![label.clone(), table.issue.clone(), c.label.clone(), m, s, n, c.n_pairs.to_string()]);
            }
        }
    }
    t.to_csv()
}

/// Similarity μ / σ per metric for each labelled source (model or baseline).
pub fn similarity_table(report: &RetrieverReport, model_label: &str) -> Table {
    let mut t = Table::new(
        "retriever_similarity",
        "Retriever agreement between query pairs: distribution over relations of the per-relation mean (mu) and std (sigma)",
        &["Model", "Metric", "Similarity mu", "Similarity sigma"],
    );
    for (label, rows) in [("r-all", &report.r_all), ("r-subject", &report.r_subject), (model_label, &report.model)] {
        for (i, r) in rows.iter().enumerate() {
            t.row(vec![
                if i == 0 { label.to_string() } else { String::new() },
                r.metric.clone(),
                fmt_summary(r.mu),
                fmt_summary(r.sigma),
            ]);
        }
    }
    t
}

pub fn match_table(report: &RetrieverReport, model_label: &str) -> Table {
    let mut t = Table::new(
        "retriever_match",
        "Retriever agreement split by whether the two predictions agree",
        &["Model", "Metric", "Match sim.", "No match sim."],
    );
    for (i, r) in report.match_split.iter().enumerate() {
        t.row(vec![
            if i == 0 { model_label.to_string() } else { String::new() },
            r.metric.clone(),
            fmt_summary(r.matched),
            fmt_summary(r.unmatched),
        ]);
    }
    t
}

pub fn correlation_table(m: &CorrelationMatrix) -> Table {
    let mut header = vec![String::new()];
    header.extend(m.metrics.iter().cloned());
    let mut t = Table {
        name: "retriever_correlation".into(),
        title: "Correlations between retriever agreement metrics on r-all pairs".into(),
        header,
        rows: Vec::new(),
    };
    for (name, cells) in m.metrics.iter().zip(&m.cells) {
        let mut r = vec![name.clone()];
        r.extend(cells.iter().map(|c| fmt_summary(*c)));
        t.rows.push(r);
    }
    t
}

pub fn reader_correlation_table(report: &RetrieverReport) -> Table {
    let mut t = Table::new(
        "reader_correlation",
        "Pearson correlation between prediction agreement and retriever agreement",
        &["Metric", "Pearson"],
    );
    for (m, s) in &report.reader_correlation {
        t.row(vec![m.clone(), fmt_summary(*s)]);
    }
    t
}

pub fn rank_table(report: &RankReport, model_label: &str) -> Table {
    let mut t = Table::new(
        "rank",
        "Frequency-based rank in the retrieved passages of the prediction and of the gold object",
        &["Model", "Type", "Rank", "Match", "No match"],
    );
    for (i, (ty, c)) in [("pred", &report.pred), ("gold", &report.gold)].into_iter().enumerate() {
        t.row(vec![
            if i == 0 { model_label.to_string() } else { String::new() },
            ty.to_string(),
            fmt_summary(c.rank),
            fmt_summary(c.matched),
            fmt_summary(c.unmatched),
        ]);
    }
    t
}

pub fn rank_correlation_table(report: &RankReport) -> Table {
    let mut t = Table::new(
        "rank_correlation",
        "Pearson correlation between prediction agreement and pair mean rank",
        &["Type", "Pearson"],
    );
    t.row(vec!["pred".into(), fmt_summary(report.pred_correlation)]);
    t.row(vec!["gold".into(), fmt_summary(report.gold_correlation)]);
    t
}

pub fn curation_table(report: &CurationReport) -> Table {
    let mut t = Table::new(
        "curation",
        &format!("Duplicate statistics (drop threshold {})", report.drop_threshold),
        &["Relation", "Name", "#entries", "#duplicates", "#exact", "#retained", "Status"],
    );
    for r in &report.relations {
        t.row(vec![
            r.relation_id.clone(),
            r.name.clone(),
            r.entries.to_string(),
            r.duplicates.to_string(),
            r.exact_duplicates.to_string(),
            r.retained.to_string(),
            if r.dropped { "dropped".into() } else { "kept".into() },
        ]);
    }
    t.row(vec![
        "Total".into(),
        String::new(),
        report.total_entries().to_string(),
        report.total_duplicates().to_string(),
        report.total_exact_duplicates().to_string(),
        report.total_retained().to_string(),
        format!("{} kept", report.retained_relations().count()),
    ]);
    t
}
