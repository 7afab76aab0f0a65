use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wfsearch_core::embed::ProviderConfig;
use wfsearch_core::engine::{IndexOptions, Method};
use wfsearch_core::http::Secret;
use wfsearch_core::rerank::RerankConfig;

use crate::ServiceError;

/// Methods the HTTP API accepts.
pub const SERVED_METHODS: [Method; 5] = [
    Method::Tfidf,
    Method::Bm25,
    Method::Fuzzy,
    Method::Dense,
    Method::Multivector,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen_addr: String,
    pub corpus_path: PathBuf,
    pub default_method: Method,
    pub default_k: usize,
    /// Largest `k` a request may ask for.
    pub max_k: usize,
    /// Whether requests that omit `rerank` are reranked.
    pub rerank_enabled: bool,
    /// Reranker calls allowed in flight at once.
    pub rerank_concurrency: usize,
    pub embed: ProviderConfig,
    pub rerank: RerankConfig,
    pub index: IndexOptions,
    /// Origins allowed cross-origin access; empty means same-origin only.
    pub cors_allowlist: Vec<String>,
    /// Required in `x-admin-token` for reindexing. Unset disables reindex.
    pub admin_token: Option<Secret>,
    /// Built web UI assets, served for paths outside the API.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_addr: "127.0.0.1:8080".into(),
            corpus_path: PathBuf::from("corpus.json"),
            default_method: Method::Bm25,
            default_k: 10,
            max_k: 200,
            rerank_enabled: false,
            rerank_concurrency: 4,
            embed: ProviderConfig::default(),
            rerank: RerankConfig::default(),
            index: IndexOptions::default(),
            cors_allowlist: Vec::new(),
            admin_token: None,
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `LISTEN_ADDR`, `CORPUS_PATH`, `ADMIN_TOKEN` and the provider
    /// variables of the embedding and rerank configs.
    pub fn apply_env(mut self) -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        if let Some(v) = var("LISTEN_ADDR") {
            self.listen_addr = v;
        }
        if let Some(v) = var("CORPUS_PATH") {
            self.corpus_path = PathBuf::from(v);
        }
        if let Some(v) = var("ADMIN_TOKEN") {
            self.admin_token = Some(Secret::new(v));
        }
        self.embed = self.embed.apply_env();
        self.rerank = self.rerank.apply_env();
        self
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.default_k == 0 || self.max_k < self.default_k {
            return Err(ServiceError::Config("need 1 <= default_k <= max_k".into()));
        }
        if !SERVED_METHODS.contains(&self.default_method) {
            return Err(ServiceError::Config(format!(
                "default_method {} is not served",
                self.default_method
            )));
        }
        if !self.index.methods.contains(&self.default_method) {
            return Err(ServiceError::Config(format!(
                "default_method {} is not in index.methods",
                self.default_method
            )));
        }
        if self.rerank_concurrency == 0 {
            return Err(ServiceError::Config("rerank_concurrency must be at least 1".into()));
        }
        self.embed.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        self.rerank.validate().map_err(ServiceError::Config)?;
        Ok(())
    }

    /// Directory that relative `ga_path` values resolve against.
    pub fn corpus_dir(&self) -> PathBuf {
        self.corpus_path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}
