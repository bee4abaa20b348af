//! `factcons`: curate a paraphrase dataset, score it against an endpoint,
//! and report consistency, form effects and retrieval diagnostics.
//!
//! Exit codes: 0 success, 1 unexpected I/O failure, 2 invalid input or
//! configuration, 3 transport failure, 4 protocol violation by the endpoint,
//! 5 digest mismatch between inputs.

mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use factcons::corpus::{CorpusError, DEFAULT_DROP_THRESHOLD};
use factcons::report::Format;
use factcons::retrieval::{RetrievalError, DEFAULT_BASELINE_SAMPLES};
use factcons::scoring::{ScoringError, DEFAULT_N_PASSAGES};
use thiserror::Error;

use commands::{EndpointOptions, Sections};

/// Errors raised by the driver itself, as opposed to the library.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("digest mismatch: {0}")]
    DigestMismatch(String),
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;
pub const EXIT_DIGEST: u8 = 5;

fn scoring_code(e: &ScoringError) -> u8 {
    match e {
        ScoringError::Transport(_) => EXIT_TRANSPORT,
        ScoringError::Protocol { .. } | ScoringError::ForcedPassagesIgnored(_) => EXIT_PROTOCOL,
        ScoringError::StaleCache { .. } => EXIT_DIGEST,
        ScoringError::Config(_) | ScoringError::Cache { .. } => EXIT_VALIDATION,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Validation(_) => EXIT_VALIDATION,
                CliError::DigestMismatch(_) => EXIT_DIGEST,
            };
        }
        if let Some(e) = cause.downcast_ref::<ScoringError>() {
            return scoring_code(e);
        }
        if let Some(e) = cause.downcast_ref::<RetrievalError>() {
            return match e {
                RetrievalError::Scoring(s) => scoring_code(s),
                _ => EXIT_VALIDATION,
            };
        }
        if cause.downcast_ref::<CorpusError>().is_some() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_IO
}

#[derive(Debug, Parser)]
#[command(name = "factcons", version, about = "Paraphrase-consistency evaluation for factual probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct FormatArgs {
    /// Report formats, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "text,json")]
    format: Vec<Format>,
}

#[derive(Debug, Args)]
struct EndpointArgs {
    /// mock:NAME[,key=value...], exec:COMMAND or http:URL
    #[arg(long)]
    endpoint: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_N_PASSAGES)]
    n_passages: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Batches in flight at once.
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Per-request timeout for http endpoints.
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Attempts per batch on transport errors.
    #[arg(long, default_value_t = 3)]
    retries: u32,
}

impl EndpointArgs {
    fn options(&self) -> EndpointOptions {
        EndpointOptions {
            endpoint: self.endpoint.clone(),
            seed: self.seed,
            n_passages: self.n_passages,
            batch_size: self.batch_size,
            concurrency: self.concurrency,
            timeout: Duration::from_secs(self.timeout_secs),
            retries: self.retries,
        }
    }
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    /// Curated dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Prediction cache, optionally labelled as LABEL=PATH. Repeatable.
    #[arg(long, required = true)]
    cache: Vec<String>,
    /// Seed for the random retriever baselines.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random pairs per relation for each retriever baseline.
    #[arg(long, default_value_t = DEFAULT_BASELINE_SAMPLES)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deduplicate raw relation files and drop relations that are not N-1.
    Curate {
        /// Directory of raw relation files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DROP_THRESHOLD)]
        drop_threshold: f64,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Score every query of a dataset and write the prediction cache.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        endpoint: EndpointArgs,
        /// Ask the endpoint for retrieved passages and query embeddings.
        #[arg(long)]
        retrieval: bool,
        /// Discard an existing cache instead of resuming it.
        #[arg(long)]
        fresh: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consistency, accuracy, knowledge and form-effect tables, plus
    /// retrieval tables for caches with passages.
    Analyze(AnalysisArgs),
    /// Re-score with forced passages and compare against the baseline.
    Intervene {
        #[arg(long)]
        data: PathBuf,
        /// Baseline prediction cache with retrieved passages.
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        endpoint: EndpointArgs,
        /// relevant, irr_cohesive, irr_incohesive, a comma list, or all.
        #[arg(long, default_value = "all")]
        mode: String,
        #[arg(long)]
        fresh: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Retriever agreement tables with random baselines.
    RetrieverMetrics(AnalysisArgs),
    /// Frequency-rank tables.
    RankReport(AnalysisArgs),
    /// Serve a mock scorer as JSON lines over stdin/stdout.
    ServeMock {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run_analysis(sections: Sections, a: &AnalysisArgs) -> anyhow::Result<()> {
    commands::analysis(sections, &a.data, &a.cache, a.samples, a.seed, &a.format.format, a.out.as_deref())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Curate {
            data,
            out,
            drop_threshold,
            format,
        } => commands::curate(&data, &out, drop_threshold, &format.format),
        Command::Evaluate {
            data,
            endpoint,
            retrieval,
            fresh,
            out,
        } => commands::evaluate(&data, &endpoint.options(), retrieval, &out, fresh),
        Command::Analyze(a) => run_analysis(Sections::All, &a),
        Command::Intervene {
            data,
            cache,
            endpoint,
            mode,
            fresh,
            out,
            format,
        } => commands::intervene(&data, &cache, &endpoint.options(), &mode, &out, &format.format, fresh),
        Command::RetrieverMetrics(a) => run_analysis(Sections::Retriever, &a),
        Command::RankReport(a) => run_analysis(Sections::Rank, &a),
        Command::ServeMock { data, endpoint, seed } => commands::serve_mock(&data, &endpoint, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
