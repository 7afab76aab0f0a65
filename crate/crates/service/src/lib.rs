//! HTTP search service over a workflow corpus.
//!
//! Requests are answered from an immutable index snapshot. `POST
//! /api/reindex` builds a replacement in the background and swaps it in
//! atomically; requests in flight keep the snapshot they started with.

mod config;
mod routes;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use thiserror::Error;
use tokio::sync::Semaphore;
use wfsearch_core::corpus::{load_corpus, Corpus, CorpusError};
use wfsearch_core::embed::{EmbedError, Embedder};
use wfsearch_core::engine::{SearchEngine, SearchError};
use wfsearch_core::rerank::{ChatClient, OpenAiChatClient};

pub use config::{ServiceConfig, SERVED_METHODS};
pub use routes::router;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "config_error",
            ServiceError::Corpus(e) => e.code(),
            ServiceError::Embed(_) => "embed_error",
            ServiceError::Search(_) => "index_error",
            ServiceError::Io(_) => "io_error",
        }
    }
}

/// One fully built set of indexes.
#[derive(Debug)]
pub struct Snapshot {
    pub engine: SearchEngine,
    pub generation: u64,
}

struct Shared {
    config: ServiceConfig,
    embedder: Arc<dyn Embedder>,
    chat: Option<Arc<dyn ChatClient>>,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    corpus_size: AtomicUsize,
    reindexing: AtomicBool,
    rerank_gate: Arc<Semaphore>,
}

/// Cheaply cloneable handle to the service state.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(config: ServiceConfig, embedder: Arc<dyn Embedder>, chat: Option<Arc<dyn ChatClient>>) -> Self {
        let permits = config.rerank_concurrency.max(1);
        Self(Arc::new(Shared {
            config,
            embedder,
            chat,
            snapshot: RwLock::new(None),
            corpus_size: AtomicUsize::new(0),
            reindexing: AtomicBool::new(false),
            rerank_gate: Arc::new(Semaphore::new(permits)),
        }))
    }

    /// Builds the embedder and, when an endpoint is configured, the
    /// reranking client from `config`. Call this outside an async runtime;
    /// the blocking HTTP clients cannot be built on a runtime thread.
    pub fn from_config(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let embedder: Arc<dyn Embedder> = Arc::from(config.embed.build()?);
        let chat: Option<Arc<dyn ChatClient>> = if config.rerank.is_configured() {
            let client = OpenAiChatClient::new(&config.rerank).map_err(|e| ServiceError::Config(e.to_string()))?;
            Some(Arc::new(client))
        } else {
            None
        };
        Ok(Self::new(config, embedder, chat))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub fn chat(&self) -> Option<Arc<dyn ChatClient>> {
        self.0.chat.clone()
    }

    pub fn rerank_gate(&self) -> Arc<Semaphore> {
        Arc::clone(&self.0.rerank_gate)
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.0.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn corpus_size(&self) -> usize {
        self.0.corpus_size.load(Ordering::Relaxed)
    }

    /// Reads the corpus file and records its size for `/health`.
    pub fn load_corpus(&self) -> Result<Corpus, ServiceError> {
        let corpus = load_corpus(&self.0.config.corpus_path)?;
        self.0.corpus_size.store(corpus.len(), Ordering::Relaxed);
        Ok(corpus)
    }

    /// Builds indexes for `corpus` and makes them the live snapshot.
    pub fn install(&self, corpus: Corpus) -> Result<u64, ServiceError> {
        let started = Instant::now();
        let engine = SearchEngine::build(
            Arc::new(corpus),
            Arc::clone(&self.0.embedder),
            self.0.config.index.clone(),
        )?;
        let mut slot = self.0.snapshot.write().expect("snapshot lock");
        let generation = slot.as_ref().map_or(1, |s| s.generation + 1);
        self.0.corpus_size.store(engine.corpus().len(), Ordering::Relaxed);
        *slot = Some(Arc::new(Snapshot { engine, generation }));
        tracing::info!(
            generation,
            docs = self.corpus_size(),
            ms = started.elapsed().as_secs_f64() * 1e3,
            "index snapshot installed"
        );
        Ok(generation)
    }

    /// Loads the corpus file and installs a fresh snapshot. Blocking.
    pub fn rebuild(&self) -> Result<u64, ServiceError> {
        let corpus = self.load_corpus()?;
        self.install(corpus)
    }

    /// Claims the single reindex slot. False if a rebuild is running.
    pub fn try_begin_reindex(&self) -> bool {
        self.0
            .reindexing
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_ok()
    }

    pub fn end_reindex(&self) {
        self.0.reindexing.store(false, Ordering::Release);
    }
}

/// Runs `f` on a fresh OS thread outside any async runtime context. The
/// blocking HTTP clients used for embeddings and reranking refuse to run
/// on runtime threads, including the runtime's own blocking pool.
pub async fn off_runtime<F, R>(f: F) -> R
where
    F: FnOnce() -> R + Send + 'static,
    R: Send + 'static,
{
    let (tx, rx) = tokio::sync::oneshot::channel();
    std::thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.await.expect("worker thread panicked")
}

/// Binds, starts the initial index build in the background and serves
/// until interrupted.
pub async fn serve(state: AppState) -> Result<(), ServiceError> {
    state.load_corpus()?;
    let listener = tokio::net::TcpListener::bind(&state.config().listen_addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");

    let builder = state.clone();
    std::thread::spawn(move || {
        if builder.try_begin_reindex() {
            if let Err(e) = builder.rebuild() {
                tracing::error!(error = %e, "initial index build failed");
            }
            builder.end_reindex();
        }
    });

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
