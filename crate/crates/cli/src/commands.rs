//! Command implementations. Each one resolves its inputs, computes the
//! manifest digest before doing any work, writes artifacts atomically and
//! finishes by writing `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use factcons::corpus::{self, annotations, dataset_digest, deduplicate, load_dataset, write_dataset, Dataset};
use factcons::digest::sha256_hex;
use factcons::metrics::{self, MetricsReport, PairRecord, StratifiedTable};
use factcons::report::{self, Format, Table};
use factcons::retrieval::intervention::InterventionPlan;
use factcons::retrieval::overlap::OverlapDiagnostics;
use factcons::retrieval::rank::annotate_ranks;
use factcons::retrieval::{
    annotate_retrieval, plan_intervention, random_baseline, rank_consistency_report, rank_records,
    retriever_consistency_report, run_intervention, BaselineMode, InterventionMode, RankReport, RetrieverReport,
};
use factcons::scoring::cache::{read_cache, CacheContents};
use factcons::scoring::endpoint::serve_lines;
use factcons::scoring::{
    build_scorer, check_free_agreement, run_scorer, CacheHeader, EndpointSpec, Prediction, RetryPolicy, RunOptions,
};
use serde::Serialize;
use serde_json::Value;

use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::output::{self, Report};
use crate::CliError;

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Options shared by the commands that talk to an endpoint.
#[derive(Debug, Clone)]
pub struct EndpointOptions {
    pub endpoint: String,
    pub seed: u64,
    pub n_passages: usize,
    pub batch_size: usize,
    pub concurrency: usize,
    pub timeout: Duration,
    pub retries: u32,
}

impl EndpointOptions {
    fn run_options(&self, want_retrieval: bool) -> RunOptions {
        RunOptions {
            batch_size: self.batch_size,
            concurrency: self.concurrency,
            n_passages: self.n_passages,
            want_retrieval,
            retry: RetryPolicy {
                attempts: self.retries.max(1),
                ..RetryPolicy::default()
            },
            ..RunOptions::default()
        }
    }
}

fn cfg(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn resolve(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Creates `dir` and refuses to clobber the manifest of a different command.
fn prepare_out(dir: &Path, command: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let m = dir.join(MANIFEST_FILE);
    if m.exists() {
        let existing = Manifest::read(&m)?;
        if existing.command != command {
            return Err(CliError::Validation(format!(
                "{} already holds the manifest of a `{}` run; choose another --out",
                dir.display(),
                existing.command
            ))
            .into());
        }
    }
    Ok(())
}

fn load_data(dir: &Path) -> Result<Dataset> {
    Ok(load_dataset(dir)?)
}

/// A prediction cache checked against the dataset and, when present, the
/// manifest of the run that wrote it.
struct LoadedCache {
    label: String,
    file_name: String,
    sha256: String,
    contents: CacheContents,
}

fn load_cache(path: &Path, label: Option<String>, dataset: &Dataset) -> Result<LoadedCache> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Validation(format!("prediction cache {} not found", path.display())).into())
        }
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let contents = read_cache(path)?
        .ok_or_else(|| CliError::Validation(format!("prediction cache {} not found", path.display())))?;
    let expected = dataset.digest();
    if contents.header.dataset_digest != expected {
        return Err(CliError::DigestMismatch(format!(
            "{} was scored on dataset {}, but --data has digest {}",
            path.display(),
            contents.header.dataset_digest,
            expected
        ))
        .into());
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sha256 = sha256_hex(&bytes);
    if let Some(dir) = path.parent() {
        let m = dir.join(MANIFEST_FILE);
        if m.exists() {
            let manifest = Manifest::read(&m)?;
            if let Some(recorded) = manifest.artifacts.get(&file_name) {
                if contents.header.context.as_deref() != Some(manifest.manifest_digest.as_str()) || *recorded != sha256 {
                    return Err(CliError::DigestMismatch(format!(
                        "{} does not match the run recorded in {}",
                        path.display(),
                        m.display()
                    ))
                    .into());
                }
            }
        }
    }
    let label = label.unwrap_or_else(|| {
        contents
            .header
            .endpoint
            .split(',')
            .next()
            .unwrap_or_default()
            .to_string()
    });
    Ok(LoadedCache {
        label,
        file_name,
        sha256,
        contents,
    })
}

/// `LABEL=PATH` or `PATH`.
pub fn parse_cache_arg(s: &str) -> (Option<String>, PathBuf) {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !label.contains(['/', '\\']) => {
            (Some(label.to_string()), PathBuf::from(path))
        }
        _ => (None, PathBuf::from(s)),
    }
}

pub fn curate(data: &Path, out: &Path, drop_threshold: f64, formats: &[Format]) -> Result<()> {
    let t0 = Instant::now();
    if resolve(data) == resolve(out) {
        return Err(CliError::Validation("--out must differ from --data".into()).into());
    }
    let mut raw = load_data(data)?;
    let input_digest = dataset_digest(&raw);
    for r in &mut raw.relations {
        annotations::apply(&mut r.spec);
    }
    let (curated, curation) = deduplicate(&raw, drop_threshold)?;

    prepare_out(out, "curate")?;
    let keep: Vec<String> = curated.relations.iter().map(|r| format!("{}.jsonl", r.id())).collect();
    let stale: Vec<String> = fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".jsonl") && !keep.contains(n))
        .collect();
    if !stale.is_empty() {
        return Err(CliError::Validation(format!(
            "{} holds relation files this run would not write: {}",
            out.display(),
            stale.join(", ")
        ))
        .into());
    }

    let mut manifest = Manifest::new(
        "curate",
        cfg([
            ("input_digest", Value::from(input_digest)),
            ("drop_threshold", Value::from(drop_threshold)),
            ("annotations", Value::from(true)),
            ("dataset_digest", Value::from(curated.digest())),
        ]),
    );
    manifest.path("data", &resolve(data));
    manifest.path("out", &resolve(out));
    for path in write_dataset(out, &curated)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        manifest.artifact(&name, &fs::read(&path)?);
    }
    let notes = vec![format!(
        "{} of {} relations kept, {} facts",
        curation.retained_relations().count(),
        curation.relations.len(),
        curated.n_tuples()
    )];
    output::emit(
        &Report {
            base: "curation",
            tables: vec![report::curation_table(&curation)],
            notes,
            data: &curation,
        },
        formats,
        Some(out),
        &mut manifest,
    )?;
    manifest.timing("total", t0.elapsed());
    manifest.write(out)
}

pub fn evaluate(data: &Path, ep: &EndpointOptions, want_retrieval: bool, out: &Path, fresh: bool) -> Result<()> {
    let t0 = Instant::now();
    let dataset = load_data(data)?;
    let spec = EndpointSpec::parse(&ep.endpoint)?;
    let identity = spec.identity();
    let digest = dataset.digest();
    let manifest_cfg = cfg([
        ("dataset_digest", Value::from(digest.clone())),
        ("endpoint", Value::from(identity.clone())),
        ("seed", Value::from(ep.seed)),
        ("n_passages", Value::from(ep.n_passages)),
        ("want_retrieval", Value::from(want_retrieval)),
    ]);
    let mut manifest = Manifest::new("evaluate", manifest_cfg);
    manifest.path("data", &resolve(data));
    manifest.path("out", &resolve(out));

    prepare_out(out, "evaluate")?;
    let cache_path = out.join(PREDICTIONS_FILE);
    if fresh && cache_path.exists() {
        fs::remove_file(&cache_path).with_context(|| format!("removing {}", cache_path.display()))?;
    }
    let scorer = build_scorer(&spec, ep.seed, &dataset, ep.timeout)?;
    let header = CacheHeader::new(identity, ep.seed, ep.n_passages, want_retrieval, digest)
        .with_context(manifest.manifest_digest.clone());
    let queries = dataset.queries(corpus::DEFAULT_MASK);
    let t_score = Instant::now();
    let run = run_scorer(&dataset, &queries, scorer.as_ref(), &ep.run_options(want_retrieval), Some((&cache_path, &header)))?;
    manifest.timing("score", t_score.elapsed());
    log::info!(
        "scored {} queries: {} sent, {} from cache",
        run.predictions.len(),
        run.requests_sent,
        run.cache_hits
    );
    manifest.artifact(PREDICTIONS_FILE, &fs::read(&cache_path)?);
    if let Some(a) = check_free_agreement(&run.predictions, &dataset) {
        log::info!("free-vs-constrained agreement {a:.4}");
    }
    println!("{} predictions in {}", run.predictions.len(), cache_path.display());
    println!("manifest {}", manifest.manifest_digest);
    manifest.timing("total", t0.elapsed());
    manifest.write(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sections {
    /// Consistency, knowledge and form-effect tables, plus retrieval tables
    /// for runs that have passages.
    All,
    Retriever,
    Rank,
}

impl Sections {
    fn command(self) -> &'static str {
        match self {
            Self::All => "analyze",
            Self::Retriever => "retriever-metrics",
            Self::Rank => "rank-report",
        }
    }

    fn base(self) -> &'static str {
        match self {
            Self::All => "analysis",
            Self::Retriever => "retriever",
            Self::Rank => "rank",
        }
    }
}

#[derive(Debug, Serialize)]
struct RetrievalAnalysis {
    overlap: OverlapDiagnostics,
    baseline_samples: usize,
    skipped_baseline_relations: Vec<String>,
    retriever: RetrieverReport,
    rank: RankReport,
}

#[derive(Debug, Serialize)]
struct RunAnalysis {
    label: String,
    cache: String,
    header: CacheHeader,
    metrics: MetricsReport,
    strata: Vec<StratifiedTable>,
    free_generation_agreement: Option<f64>,
    /// Absent when the cache holds no retrieved passages.
    retrieval: Option<RetrievalAnalysis>,
}

fn analyze_run(dataset: &Dataset, cache: LoadedCache, samples: usize, seed: u64) -> RunAnalysis {
    let preds: &[Prediction] = &cache.contents.predictions;
    let (metrics, mut pairs): (MetricsReport, Vec<PairRecord>) = metrics::evaluate(dataset, preds);
    let strata = metrics::stratify(dataset, &pairs, &metrics.relations);
    let retrieval = preds.iter().any(|p| p.passages.is_some()).then(|| {
        let overlap = annotate_retrieval(&mut pairs, preds);
        let records = rank_records(dataset, preds);
        annotate_ranks(&mut pairs, &records);
        let r_all = random_baseline(preds, BaselineMode::All, samples, seed);
        let r_subject = random_baseline(preds, BaselineMode::Subject, samples, seed);
        let mut skipped = r_all.skipped_relations.clone();
        skipped.extend(r_subject.skipped_relations.iter().cloned());
        skipped.sort();
        skipped.dedup();
        RetrievalAnalysis {
            overlap,
            baseline_samples: samples,
            skipped_baseline_relations: skipped,
            retriever: retriever_consistency_report(&pairs, &r_all, &r_subject),
            rank: rank_consistency_report(&records, &pairs),
        }
    });
    RunAnalysis {
        free_generation_agreement: check_free_agreement(preds, dataset),
        label: cache.label,
        cache: cache.file_name,
        header: cache.contents.header,
        metrics,
        strata,
        retrieval,
    }
}

fn diagnostics_note(label: &str, d: &metrics::Diagnostics) -> Option<String> {
    if d.is_clean() {
        return None;
    }
    let mut parts = Vec::new();
    for (n, what) in [
        (d.incomplete_tuples, "incomplete facts"),
        (d.missing_lama, "facts without a LAMA-template answer"),
        (d.tuples_without_pairs, "facts with fewer than two answers"),
        (d.unmatched_predictions, "predictions for unknown queries"),
        (d.duplicate_predictions, "duplicate predictions"),
    ] {
        if n > 0 {
            parts.push(format!("{n} {what}"));
        }
    }
    parts.extend(d.notes.iter().cloned());
    Some(format!("{label}: {}", parts.join("; ")))
}

fn suffixed(mut t: Table, i: usize) -> Table {
    if i > 0 {
        t.name = format!("{}_{}", t.name, i + 1);
    }
    t
}

pub fn analysis(
    sections: Sections,
    data: &Path,
    caches: &[String],
    samples: usize,
    seed: u64,
    formats: &[Format],
    out: Option<&Path>,
) -> Result<()> {
    let t0 = Instant::now();
    if caches.is_empty() {
        return Err(CliError::Validation("at least one --cache is required".into()).into());
    }
    let dataset = load_data(data)?;
    let mut loaded = Vec::new();
    for c in caches {
        let (label, path) = parse_cache_arg(c);
        loaded.push((resolve(&path), load_cache(&path, label, &dataset)?));
    }
    let inputs: Vec<Value> = loaded
        .iter()
        .map(|(_, c)| serde_json::json!({ "label": c.label, "sha256": c.sha256 }))
        .collect();
    let mut manifest = Manifest::new(
        sections.command(),
        cfg([
            ("dataset_digest", Value::from(dataset.digest())),
            ("caches", Value::from(inputs)),
            ("baseline_samples", Value::from(samples)),
            ("seed", Value::from(seed)),
        ]),
    );
    manifest.path("data", &resolve(data));
    for (i, (p, _)) in loaded.iter().enumerate() {
        manifest.path(&format!("cache_{}", i + 1), p);
    }
    if let Some(o) = out {
        prepare_out(o, sections.command())?;
        manifest.path("out", &resolve(o));
    }

    let runs: Vec<RunAnalysis> = loaded
        .into_iter()
        .map(|(_, c)| analyze_run(&dataset, c, samples, seed))
        .collect();

    let mut tables = Vec::new();
    let mut notes = Vec::new();
    if sections == Sections::All {
        let summary_rows: Vec<(String, &metrics::SummaryMetrics)> =
            runs.iter().map(|r| (r.label.clone(), &r.metrics.summary)).collect();
        tables.push(report::consistency_table("consistency", "Model", &summary_rows));
        tables.push(report::knowledge_table(&summary_rows));
        let strata_rows: Vec<(String, &[StratifiedTable])> =
            runs.iter().map(|r| (r.label.clone(), r.strata.as_slice())).collect();
        tables.extend(report::strata_tables(&strata_rows));
        if let Some(dir) = out {
            let csv = format!("# manifest {}\n{}", manifest.manifest_digest, report::form_effects_csv(&strata_rows));
            output::artifact(dir, "form_effects.csv", csv.as_bytes(), &mut manifest)?;
        }
        for r in &runs {
            notes.extend(diagnostics_note(&r.label, &r.metrics.diagnostics));
            if let Some(a) = r.free_generation_agreement {
                notes.push(format!("{}: free-vs-constrained agreement {a:.2}", r.label));
            }
        }
    }
    for (i, r) in runs.iter().enumerate() {
        let Some(ret) = &r.retrieval else {
            if sections != Sections::All {
                return Err(CliError::Validation(format!(
                    "{} has no retrieved passages; re-run evaluate with --retrieval",
                    r.cache
                ))
                .into());
            }
            notes.push(format!("{}: retrieval tables absent (the cache has no retrieved passages)", r.label));
            continue;
        };
        if matches!(sections, Sections::All | Sections::Retriever) {
            tables.push(suffixed(report::similarity_table(&ret.retriever, &r.label), i));
            tables.push(suffixed(report::match_table(&ret.retriever, &r.label), i));
            tables.push(suffixed(report::correlation_table(&ret.retriever.correlations), i));
            tables.push(suffixed(report::reader_correlation_table(&ret.retriever), i));
            if ret.overlap.unequal_passage_counts > 0 {
                notes.push(format!(
                    "{}: {} pairs compared passage lists of unequal length",
                    r.label, ret.overlap.unequal_passage_counts
                ));
            }
        }
        if matches!(sections, Sections::All | Sections::Rank) {
            tables.push(suffixed(report::rank_table(&ret.rank, &r.label), i));
            tables.push(suffixed(report::rank_correlation_table(&ret.rank), i));
        }
    }

    output::emit(
        &Report {
            base: sections.base(),
            tables,
            notes,
            data: &runs,
        },
        formats,
        out,
        &mut manifest,
    )?;
    if let Some(dir) = out {
        manifest.timing("total", t0.elapsed());
        manifest.write(dir)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct InterventionRow {
    intervention: String,
    cache: Option<String>,
    plan_digest: Option<String>,
    skipped_facts: usize,
    metrics: metrics::SummaryMetrics,
    /// Macro mean of per-relation mean passage-id overlap between paraphrases.
    id_overlap: Option<f64>,
}

fn mean_id_overlap(dataset: &Dataset, preds: &[Prediction]) -> Option<f64> {
    let (_, mut pairs) = metrics::evaluate(dataset, preds);
    annotate_retrieval(&mut pairs, preds);
    let mut by_rel: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for p in &pairs {
        if let Some(o) = p.id_overlap {
            by_rel.entry(p.relation_id.as_str()).or_default().push(o);
        }
    }
    let means: Vec<f64> = by_rel.values().filter_map(|v| metrics::stats::mean(v)).collect();
    metrics::stats::mean(&means)
}

pub fn parse_modes(mode: &str) -> Result<Vec<InterventionMode>> {
    if mode == "all" {
        return Ok(InterventionMode::ALL.to_vec());
    }
    let mut modes = Vec::new();
    for m in mode.split(',') {
        let m: InterventionMode = m.trim().parse()?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    modes.sort();
    Ok(modes)
}

pub fn intervene(
    data: &Path,
    cache: &Path,
    ep: &EndpointOptions,
    mode: &str,
    out: &Path,
    formats: &[Format],
    fresh: bool,
) -> Result<()> {
    let t0 = Instant::now();
    let modes = parse_modes(mode)?;
    let dataset = load_data(data)?;
    let baseline = load_cache(cache, Some("none".into()), &dataset)?;
    let spec = EndpointSpec::parse(&ep.endpoint)?;
    let identity = spec.identity();

    let plans: Vec<InterventionPlan> = modes
        .iter()
        .map(|&m| plan_intervention(&dataset, &baseline.contents.predictions, m, ep.seed, ep.n_passages))
        .collect::<Result<_, _>>()?;
    let plan_digests: BTreeMap<String, Value> = plans
        .iter()
        .map(|p| (p.header.mode.as_str().to_string(), Value::from(p.digest())))
        .collect();
    let mut manifest = Manifest::new(
        "intervene",
        cfg([
            ("dataset_digest", Value::from(dataset.digest())),
            ("baseline_sha256", Value::from(baseline.sha256.clone())),
            ("endpoint", Value::from(identity.clone())),
            ("seed", Value::from(ep.seed)),
            ("n_passages", Value::from(ep.n_passages)),
            ("plans", Value::from(serde_json::Map::from_iter(plan_digests))),
        ]),
    );
    manifest.path("data", &resolve(data));
    manifest.path("baseline", &resolve(cache));
    manifest.path("out", &resolve(out));
    prepare_out(out, "intervene")?;

    let scorer = build_scorer(&spec, ep.seed, &dataset, ep.timeout)?;
    let options = ep.run_options(false);
    let (base_metrics, _) = metrics::evaluate(&dataset, &baseline.contents.predictions);
    let mut rows = vec![InterventionRow {
        intervention: "none".into(),
        cache: Some(baseline.file_name.clone()),
        plan_digest: None,
        skipped_facts: 0,
        metrics: base_metrics.summary,
        id_overlap: mean_id_overlap(&dataset, &baseline.contents.predictions),
    }];
    for plan in &plans {
        let mode = plan.header.mode;
        let plan_name = format!("plan_{}.jsonl", mode.as_str());
        output::artifact(out, &plan_name, plan.to_jsonl().as_bytes(), &mut manifest)?;
        let cache_name = format!("predictions_{}.jsonl", mode.as_str());
        let cache_path = out.join(&cache_name);
        if fresh && cache_path.exists() {
            fs::remove_file(&cache_path).with_context(|| format!("removing {}", cache_path.display()))?;
        }
        let header = CacheHeader::new(identity.clone(), ep.seed, ep.n_passages, false, dataset.digest())
            .with_context(manifest.manifest_digest.clone());
        let t = Instant::now();
        let run = run_intervention(&dataset, plan, scorer.as_ref(), &options, Some((&cache_path, &header)))?;
        manifest.timing(mode.as_str(), t.elapsed());
        manifest.artifact(&cache_name, &fs::read(&cache_path)?);
        let (m, _) = metrics::evaluate(&dataset, &run.predictions);
        rows.push(InterventionRow {
            intervention: mode.label().into(),
            cache: Some(cache_name),
            plan_digest: Some(plan.digest()),
            skipped_facts: plan.header.skipped.len(),
            metrics: m.summary,
            id_overlap: mean_id_overlap(&dataset, &run.predictions),
        });
    }

    let table_rows: Vec<(String, &metrics::SummaryMetrics)> =
        rows.iter().map(|r| (r.intervention.clone(), &r.metrics)).collect();
    let mut notes = Vec::new();
    for r in &rows {
        if r.skipped_facts > 0 {
            notes.push(format!("{}: {} facts skipped (see the plan header)", r.intervention, r.skipped_facts));
        }
        if let Some(o) = r.id_overlap {
            notes.push(format!("{}: mean passage-id overlap between paraphrases {o:.2}", r.intervention));
        }
    }
    output::emit(
        &Report {
            base: "intervention",
            tables: vec![report::consistency_table("intervention", "Intervention", &table_rows)],
            notes,
            data: &rows,
        },
        formats,
        Some(out),
        &mut manifest,
    )?;
    manifest.timing("total", t0.elapsed());
    manifest.write(out)
}

/// Serves a mock scorer over stdio JSON lines until EOF.
pub fn serve_mock(data: &Path, endpoint: &str, seed: u64) -> Result<()> {
    let dataset = load_data(data)?;
    let spec = EndpointSpec::parse(endpoint)?;
    if !matches!(spec, EndpointSpec::Mock(_)) {
        return Err(CliError::Validation("serve-mock needs a mock:NAME endpoint".into()).into());
    }
    let scorer = build_scorer(&spec, seed, &dataset, Duration::from_secs(1))?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_lines(scorer.as_ref(), stdin.lock(), stdout.lock())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_arg_label() {
        assert_eq!(parse_cache_arg("atlas=runs/a.jsonl"), (Some("atlas".into()), PathBuf::from("runs/a.jsonl")));
        assert_eq!(parse_cache_arg("runs/x=1/a.jsonl"), (None, PathBuf::from("runs/x=1/a.jsonl")));
        assert_eq!(parse_cache_arg("a.jsonl"), (None, PathBuf::from("a.jsonl")));
    }

    #[test]
    fn modes_sorted_and_deduplicated() {
        assert_eq!(parse_modes("all").unwrap(), InterventionMode::ALL.to_vec());
        assert_eq!(
            parse_modes("irr-incohesive,relevant,relevant").unwrap(),
            vec![InterventionMode::Relevant, InterventionMode::IrrIncohesive]
        );
        assert!(parse_modes("bogus").is_err());
    }
}
