use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::json;
use tracing_subscriber::EnvFilter;
use wfsearch_core::benchgen::{fill_gold, generate_benchmark, GoldParams, QueryMode, TopicModel};
use wfsearch_core::corpus::{
    fetch_published, ingest_ga_dir, ingest_training_dir, load_corpus, load_queries, save_corpus, save_queries, Corpus,
    FetchOptions, IngestReport,
};
use wfsearch_core::embed::Embedder;
use wfsearch_core::engine::{two_stage_search, Method, MethodRetriever, Retriever, SearchEngine, TwoStageRetriever};
use wfsearch_core::evalharness::{evaluate, restrict_gold_to_corpus, run_all, RunOptions};
use wfsearch_core::lexical::TfidfIndex;
use wfsearch_core::rerank::OpenAiChatClient;
use wfsearch_service::{AppState, ServiceConfig, ServiceError};

use crate::error::CliError;
use crate::{
    ClusterArgs, Command, CorpusArgs, EvalArgs, GenqueriesArgs, GoldgenArgs, IndexArgs, IngestArgs, IngestTrainingArgs,
    QueryModeArg, SearchArgs, ServeArgs,
};

pub fn run(command: Command) -> Result<(), CliError> {
    if let Command::Serve(args) = command {
        return serve(args);
    }
    init_logging(false);
    match command {
        Command::Ingest(a) => ingest(a),
        Command::IngestTraining(a) => ingest_training(a),
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::Cluster(a) => cluster(a),
        Command::Genqueries(a) => genqueries(a),
        Command::Goldgen(a) => goldgen(a),
        Command::Eval(a) => eval(a),
        Command::Serve(_) => unreachable!("handled above"),
    }
}

/// Human-readable logs on stderr for batch commands; JSON lines on stdout
/// for the service.
fn init_logging(json: bool) {
    let default = if json { "info" } else { "warn" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = if json {
        tracing_subscriber::fmt()
            .json()
            .with_env_filter(filter)
            .with_writer(io::stdout)
            .try_init()
    } else {
        tracing_subscriber::fmt()
            .with_env_filter(filter)
            .with_writer(io::stderr)
            .try_init()
    };
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(
            "input_not_found",
            format!("{} does not exist", path.display()),
        ))
    }
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig, CliError> {
    let cfg = match path {
        Some(p) => {
            require_file(p)?;
            ServiceConfig::load(p).map_err(|e| CliError::usage("config_error", e.to_string()))?
        }
        None => ServiceConfig::default(),
    };
    Ok(cfg.apply_env())
}

/// Config plus corpus for commands that take [`CorpusArgs`].
fn open(args: &CorpusArgs) -> Result<(ServiceConfig, Corpus), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    require_file(&args.corpus)?;
    let corpus = load_corpus(&args.corpus)?;
    if corpus.is_empty() {
        return Err(CliError::usage(
            "empty_corpus",
            format!("{} has no workflows", args.corpus.display()),
        ));
    }
    Ok((cfg, corpus))
}

fn embedder(cfg: &ServiceConfig) -> Result<Arc<dyn Embedder>, CliError> {
    cfg.embed
        .validate()
        .map_err(|e| CliError::usage("config_error", e.to_string()))?;
    Ok(Arc::from(cfg.embed.build()?))
}

fn chat_client(cfg: &ServiceConfig) -> Result<Option<OpenAiChatClient>, CliError> {
    if !cfg.rerank.is_configured() {
        return Ok(None);
    }
    Ok(Some(OpenAiChatClient::new(&cfg.rerank)?))
}

fn build_engine(cfg: &ServiceConfig, corpus: Corpus, methods: &[Method]) -> Result<SearchEngine, CliError> {
    let mut opts = cfg.index.clone();
    if !methods.is_empty() {
        opts.methods = methods.to_vec();
    }
    Ok(SearchEngine::build(Arc::new(corpus), embedder(cfg)?, opts)?)
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn write_ingest(report: IngestReport, out: &Path) -> Result<(), CliError> {
    for (path, why) in &report.skipped {
        tracing::warn!(path = %path.display(), reason = %why, "skipped file");
    }
    let skipped = report.skipped.len();
    let corpus = Corpus::new(report.workflows)?;
    save_corpus(&corpus, out)?;
    print_json(json!({"workflows": corpus.len(), "skipped": skipped, "out": out.display().to_string()}));
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    if let Some(dir) = &a.ga_dir {
        require_file(dir)?;
        return write_ingest(ingest_ga_dir(dir)?, &a.out);
    }
    let api = a.api.as_deref().expect("clap requires --api or --ga-dir");
    if a.page_size == 0 || a.page_limit == 0 || a.timeout.is_nan() || a.timeout <= 0.0 {
        return Err(CliError::usage(
            "invalid_value",
            "--page-size, --page-limit and --timeout must be positive",
        ));
    }
    let opts = FetchOptions {
        page_limit: a.page_limit,
        page_size: a.page_size,
        timeout: Duration::from_secs_f64(a.timeout),
        with_tools: a.with_tools,
    };
    let workflows = fetch_published(api, &opts)?;
    write_ingest(
        IngestReport {
            workflows,
            skipped: Vec::new(),
        },
        &a.out,
    )
}

fn ingest_training(a: IngestTrainingArgs) -> Result<(), CliError> {
    require_file(&a.root)?;
    write_ingest(ingest_training_dir(&a.root)?, &a.out)
}

fn index(a: IndexArgs) -> Result<(), CliError> {
    let (cfg, corpus) = open(&a.corpus)?;
    let started = Instant::now();
    let engine = build_engine(&cfg, corpus, &a.methods)?;
    let methods: Vec<&str> = engine.methods().into_iter().map(Method::as_str).collect();
    print_json(json!({
        "docs": engine.corpus().len(),
        "methods": methods,
        "embedder": engine.embedder_name(),
        "vocab_size": engine.tfidf().map(TfidfIndex::vocab_size),
        "chunks": engine.multivector().map(|m| m.chunk_count()),
        "build_ms": started.elapsed().as_secs_f64() * 1e3,
    }));
    Ok(())
}

fn search(a: SearchArgs) -> Result<(), CliError> {
    let (cfg, corpus) = open(&a.corpus)?;
    let chat = if a.rerank { chat_client(&cfg)? } else { None };
    if a.rerank && chat.is_none() {
        eprintln!("warning: reranker not configured, kept stage-1 order");
    }
    let engine = build_engine(&cfg, corpus, &[a.method])?;
    let k = a.k as usize;
    let reranker = chat
        .as_ref()
        .map(|c| (c as &dyn wfsearch_core::rerank::ChatClient, &cfg.rerank));
    let result = two_stage_search(&engine, a.method, &a.query, k, reranker)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let title = |id: &str| engine.corpus().get(id).map(|w| w.title.clone()).unwrap_or_default();
    if a.json {
        for (i, hit) in result.list.iter().enumerate() {
            let line = json!({"rank": i + 1, "id": hit.id, "title": title(&hit.id), "score": hit.score});
            writeln!(out, "{line}")?;
        }
    } else {
        writeln!(out, "{:>4}  {:>9}  {:<40}  title", "rank", "score", "id")?;
        for (i, hit) in result.list.iter().enumerate() {
            writeln!(
                out,
                "{:>4}  {:>9.4}  {:<40}  {}",
                i + 1,
                hit.score,
                hit.id,
                title(&hit.id)
            )?;
        }
    }
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<(), CliError> {
    let (cfg, corpus) = open(&a.corpus)?;
    if a.topics == 0 || a.topics > corpus.len() {
        return Err(CliError::usage(
            "invalid_value",
            format!("--topics must lie in [1, {}]", corpus.len()),
        ));
    }
    let emb = embedder(&cfg)?;
    let model = TopicModel::build(
        &corpus,
        &cfg.index.fields,
        emb.as_ref(),
        a.topics,
        a.seed,
        a.top_keywords,
    )?;
    model.save(&a.out)?;
    for t in 0..model.k {
        print_json(json!({"topic": t, "label": model.label(t), "members": model.members(t).len()}));
    }
    Ok(())
}

fn genqueries(a: GenqueriesArgs) -> Result<(), CliError> {
    let (cfg, corpus) = open(&a.corpus)?;
    require_file(&a.model)?;
    if a.n == 0 {
        return Err(CliError::usage("invalid_value", "--n must be at least 1"));
    }
    let model = TopicModel::load(&a.model)?;
    let queries = match a.mode {
        QueryModeArg::Template => generate_benchmark(&corpus, &model, a.n, &QueryMode::Template)?,
        QueryModeArg::Llm => {
            let client = chat_client(&cfg)?.ok_or_else(|| {
                CliError::usage(
                    "llm_not_configured",
                    "llm mode needs a chat endpoint (RERANK_API_URL or config)",
                )
            })?;
            generate_benchmark(&corpus, &model, a.n, &QueryMode::Llm(&client))?
        }
    };
    save_queries(&a.out, &queries)?;
    print_json(json!({"queries": queries.len(), "topics": model.k, "out": a.out.display().to_string()}));
    Ok(())
}

fn goldgen(a: GoldgenArgs) -> Result<(), CliError> {
    let (cfg, corpus) = open(&a.corpus)?;
    require_file(&a.queries)?;
    let params = GoldParams {
        tfidf_threshold: a.tau,
        min_keyword_overlap: a.min_overlap,
    };
    params
        .validate()
        .map_err(|e| CliError::usage("invalid_value", e.to_string()))?;
    let membership = match &a.model {
        Some(path) => {
            require_file(path)?;
            let model = TopicModel::load(path)?;
            model.check(&corpus)?;
            model.membership()
        }
        None => corpus.topic_members(),
    };
    let mut queries = load_queries(&a.queries)?;
    let tfidf = TfidfIndex::build(&corpus, &cfg.index.fields).map_err(wfsearch_core::benchgen::BenchError::from)?;
    fill_gold(&corpus, &tfidf, &mut queries, &membership, &params)?;
    save_queries(&a.out, &queries)?;
    let gold: usize = queries.iter().map(|q| q.gold_workflow_ids.len()).sum();
    print_json(json!({"queries": queries.len(), "gold_ids": gold, "out": a.out.display().to_string()}));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let (cfg, corpus) = open(&a.corpus)?;
    require_file(&a.queries)?;
    let methods: Vec<Method> = a.methods.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut queries = load_queries(&a.queries)?;
    let dropped = restrict_gold_to_corpus(&mut queries, &corpus);
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} gold ids missing from the corpus");
    }
    let chat = if a.rerank {
        Some(chat_client(&cfg)?.ok_or_else(|| {
            CliError::usage(
                "llm_not_configured",
                "--rerank needs a chat endpoint (RERANK_API_URL or config)",
            )
        })?)
    } else {
        None
    };
    let engine = build_engine(&cfg, corpus, &methods)?;

    let plain: Vec<MethodRetriever> = methods
        .iter()
        .map(|&method| MethodRetriever {
            engine: &engine,
            method,
        })
        .collect();
    let reranked: Vec<TwoStageRetriever> = match &chat {
        Some(client) => methods
            .iter()
            .map(|&method| TwoStageRetriever {
                engine: &engine,
                method,
                client,
                cfg: &cfg.rerank,
            })
            .collect(),
        None => Vec::new(),
    };
    let retrievers: Vec<&dyn Retriever> = plain
        .iter()
        .map(|r| r as &dyn Retriever)
        .chain(reranked.iter().map(|r| r as &dyn Retriever))
        .collect();

    let opts = RunOptions {
        k: a.k as usize,
        parallel: a.parallel,
        measure_latency: !a.no_latency,
    };
    let runs = run_all(&retrievers, &queries, opts)?;
    let report = evaluate(&runs, &queries)?;
    match &a.out {
        Some(path) => report.write_csv(fs::File::create(path)?)?,
        None => report.write_csv(io::stdout().lock())?,
    }
    if !report.excluded_queries.is_empty() {
        eprintln!(
            "warning: {} queries with empty gold sets were excluded",
            report.excluded_queries.len()
        );
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    init_logging(true);
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(p) = a.corpus {
        cfg.corpus_path = p;
    }
    if let Some(l) = a.listen {
        cfg.listen_addr = l;
    }
    require_file(&cfg.corpus_path)?;
    // Blocking HTTP clients are created before the runtime starts.
    let state = AppState::from_config(cfg).map_err(|e| match e {
        ServiceError::Config(m) => CliError::usage("config_error", m),
        other => other.into(),
    })?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(wfsearch_service::serve(state))?;
    Ok(())
}
