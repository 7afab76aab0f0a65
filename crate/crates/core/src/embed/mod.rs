//! Embedding providers.
//!
//! [`HashEmbedder`] is a deterministic feature-hashing encoder that needs no
//! model weights; [`RemoteEmbedder`] talks to any server implementing the
//! OpenAI embeddings wire format. Every vector leaving this module is either
//! unit-norm or all-zero, so cosine similarity downstream is a dot product.

mod chunk;
mod hash;
mod remote;

pub use chunk::{chunk_text, DEFAULT_STRIDE, DEFAULT_WINDOW};
pub use hash::{fnv1a64, hash_embed, HashEmbedder, DEFAULT_HASH_DIM};
pub use remote::RemoteEmbedder;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, Secret};

pub const MIN_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding dimension must be at least {MIN_DIM}, got {0}")]
    BadDim(usize),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("embedding endpoint rejected credentials (HTTP {0})")]
    Auth(u16),
    #[error("embedding endpoint rate limited the client after {0} retries")]
    RateLimited(u32),
    #[error("malformed embeddings response: {0}")]
    Schema(String),
    #[error("network error: {0}")]
    Network(String),
}

impl From<HttpError> for EmbedError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Auth(s) => EmbedError::Auth(s),
            HttpError::RateLimited(n) => EmbedError::RateLimited(n),
            HttpError::Decode(m) => EmbedError::Schema(m),
            other => EmbedError::Network(other.to_string()),
        }
    }
}

/// A unit-norm (or all-zero) dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`; an all-zero input stays all-zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for v in &mut values {
                *v /= norm;
            }
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        Self(values)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Anything that maps texts to embedding vectors.
pub trait Embedder: Send + Sync {
    /// A short label for reports, e.g. `hash-256`.
    fn name(&self) -> String;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed(&[text.to_owned()])?;
        out.pop()
            .ok_or_else(|| EmbedError::Schema("provider returned no vector".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub api_key: Option<Secret>,
    pub dim: usize,
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Hash,
            endpoint: None,
            model_name: None,
            api_key: None,
            dim: DEFAULT_HASH_DIM,
            batch_size: 64,
            max_retries: 3,
            backoff_ms: 250,
            timeout_s: 60.0,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < MIN_DIM {
            return Err(EmbedError::BadDim(self.dim));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::BadParam("batch_size must be at least 1".into()));
        }
        if self.kind == ProviderKind::Remote && (self.endpoint.is_none() || self.model_name.is_none()) {
            return Err(EmbedError::BadParam(
                "remote provider needs an endpoint and a model name".into(),
            ));
        }
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(EmbedError::BadParam("timeout_s must be positive".into()));
        }
        Ok(())
    }

    /// Overrides fields from `EMBED_API_URL`, `EMBED_API_KEY` and
    /// `EMBED_MODEL`. Setting the URL switches the provider to remote.
    pub fn apply_env(mut self) -> Self {
        if let Some(url) = env_nonempty("EMBED_API_URL") {
            self.kind = ProviderKind::Remote;
            self.endpoint = Some(url);
        }
        if let Some(key) = env_nonempty("EMBED_API_KEY") {
            self.api_key = Some(Secret::new(key));
        }
        if let Some(model) = env_nonempty("EMBED_MODEL") {
            self.model_name = Some(model);
        }
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Hash => Box::new(HashEmbedder::new(self.dim)?),
            ProviderKind::Remote => Box::new(RemoteEmbedder::new(self.clone())?),
        })
    }
}

pub(crate) fn env_nonempty(key: &str) -> Option<String> {
    std::env::var(key).ok().filter(|v| !v.trim().is_empty())
}
