//! `wfsearch`: ingest workflow corpora, search them, synthesize a retrieval
//! benchmark and evaluate retrievers against it.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 when the pipeline fails.
//! Every failure ends with one JSON line `{"error":{"code","message"}}` on
//! stderr.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use wfsearch_core::engine::Method;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "wfsearch",
    version,
    about = "Scientific workflow search and retrieval benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch published workflows from a Galaxy server, or parse a directory
    /// of .ga files, into a corpus file.
    Ingest(IngestArgs),
    /// Parse a training-material checkout into a corpus file.
    IngestTraining(IngestTrainingArgs),
    /// Build every configured index and report its statistics.
    Index(IndexArgs),
    /// Run a query and print the ranked workflows.
    Search(SearchArgs),
    /// Cluster the corpus into topics and label them with keywords.
    Cluster(ClusterArgs),
    /// Generate benchmark queries for every topic.
    Genqueries(GenqueriesArgs),
    /// Fill in the gold workflow ids of a query file.
    Goldgen(GoldgenArgs),
    /// Evaluate retrieval methods on a query file and write a CSV report.
    Eval(EvalArgs),
    /// Run the HTTP search service.
    Serve(ServeArgs),
}

/// Options shared by commands that read a corpus.
#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus JSON file.
    #[arg(long)]
    corpus: PathBuf,
    /// Service-style JSON config supplying embedding, rerank and index
    /// settings. Environment overrides apply on top.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["api", "ga_dir"])))]
struct IngestArgs {
    /// Galaxy server base URL, e.g. https://usegalaxy.eu
    #[arg(long)]
    api: Option<String>,
    /// Directory of .ga files to ingest instead of a server.
    #[arg(long)]
    ga_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also download each published workflow definition to collect tools.
    #[arg(long)]
    with_tools: bool,
    #[arg(long, default_value_t = 10)]
    page_limit: usize,
    #[arg(long, default_value_t = 100)]
    page_size: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

#[derive(Debug, Args)]
struct IngestTrainingArgs {
    /// Root holding `<topic>/<tutorial>/**/*.ga`.
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Methods to build; defaults to the configured set.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "bm25", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Rerank the stage-one candidates with the configured chat model.
    #[arg(long)]
    rerank: bool,
    /// One JSON object per result instead of a table.
    #[arg(long)]
    json: bool,
    query: String,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Number of topics.
    #[arg(long)]
    topics: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keywords kept per topic.
    #[arg(long, default_value_t = wfsearch_core::benchgen::DEFAULT_TOP_KEYWORDS)]
    top_keywords: usize,
    /// Topic model JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QueryModeArg {
    Template,
    Llm,
}

#[derive(Debug, Args)]
struct GenqueriesArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Topic model written by `cluster`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    mode: QueryModeArg,
    /// Queries per topic.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Queries JSONL to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GoldgenArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    queries: PathBuf,
    /// Topic model whose clusters define candidate members. Without it the
    /// corpus `topic` field is used.
    #[arg(long)]
    model: Option<PathBuf>,
    /// TF-IDF cosine a topic member needs to join the gold set.
    #[arg(long, default_value_t = wfsearch_core::benchgen::DEFAULT_TFIDF_THRESHOLD)]
    tau: f64,
    /// Distinct query tokens a topic member must share to join.
    #[arg(long, default_value_t = wfsearch_core::benchgen::DEFAULT_MIN_KEYWORD_OVERLAP)]
    min_overlap: usize,
    /// Output JSONL; may equal `--queries`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_method)]
    methods: Vec<Method>,
    /// Ranked list depth per query.
    #[arg(long, default_value_t = wfsearch_core::evalharness::RECALL_K as u64, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Also evaluate each method followed by LLM reranking.
    #[arg(long)]
    rerank: bool,
    /// Run queries on several threads.
    #[arg(long)]
    parallel: bool,
    /// Record latencies as 0 so repeated runs produce identical reports.
    #[arg(long)]
    no_latency: bool,
    /// CSV report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured corpus path.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    listen: Option<String>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.trim().parse::<Method>().map_err(|e| e.to_string())
}

/// The clap message without its usage and hint lines, on one line.
fn one_line(e: &clap::Error) -> String {
    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
        return "a subcommand is required".into();
    }
    let text = e.to_string();
    let parts: Vec<&str> = text
        .lines()
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    parts.join(" ").trim_start_matches("error: ").to_owned()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                ErrorKind::MissingRequiredArgument | ErrorKind::MissingSubcommand => "missing_argument",
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => "missing_argument",
                ErrorKind::InvalidValue | ErrorKind::ValueValidation => "invalid_value",
                _ => "usage",
            };
            let _ = e.print();
            return CliError::usage(code, one_line(&e)).report();
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
