use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::embed::env_nonempty;
use crate::http::{self, HttpError, RetryPolicy, Secret};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("model call timed out")]
    Timeout,
    #[error("model endpoint rejected credentials (HTTP {0})")]
    Auth(u16),
    #[error("model endpoint rate limited the client")]
    RateLimited,
    #[error("network error: {0}")]
    Network(String),
    #[error("unexpected response: {0}")]
    Schema(String),
}

impl From<HttpError> for ClientError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Timeout => ClientError::Timeout,
            HttpError::Auth(s) => ClientError::Auth(s),
            HttpError::RateLimited(_) => ClientError::RateLimited,
            HttpError::Decode(m) => ClientError::Schema(m),
            other => ClientError::Network(other.to_string()),
        }
    }
}

/// A single-turn text completion backend.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;

    fn model(&self) -> String {
        "unknown".into()
    }
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        (**self).complete(prompt)
    }

    fn model(&self) -> String {
        (**self).model()
    }
}

/// Connection and behavior settings for LLM reranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model_name: String,
    pub api_key: Option<Secret>,
    pub candidates_k: usize,
    pub timeout_s: f64,
    pub temperature: f64,
    /// Prompts longer than this are split into sequential batches.
    pub max_prompt_chars: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_name: String::new(),
            api_key: None,
            candidates_k: 50,
            timeout_s: 60.0,
            temperature: 0.0,
            max_prompt_chars: 48_000,
            max_retries: 2,
            backoff_ms: 500,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.candidates_k == 0 {
            return Err("candidates_k must be at least 1".into());
        }
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err("timeout_s must be positive".into());
        }
        Ok(())
    }

    /// Overrides from `RERANK_API_URL`, `RERANK_API_KEY` and `RERANK_MODEL`.
    pub fn apply_env(mut self) -> Self {
        if let Some(url) = env_nonempty("RERANK_API_URL") {
            self.endpoint = url;
        }
        if let Some(key) = env_nonempty("RERANK_API_KEY") {
            self.api_key = Some(Secret::new(key));
        }
        if let Some(model) = env_nonempty("RERANK_MODEL") {
            self.model_name = model;
        }
        self
    }

    pub fn is_configured(&self) -> bool {
        !self.endpoint.is_empty()
    }
}

/// Client for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug)]
pub struct OpenAiChatClient {
    endpoint: String,
    model: String,
    api_key: Option<Secret>,
    temperature: f64,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl OpenAiChatClient {
    pub fn new(cfg: &RerankConfig) -> Result<Self, ClientError> {
        cfg.validate().map_err(ClientError::Schema)?;
        Ok(Self {
            endpoint: cfg.endpoint.clone(),
            model: cfg.model_name.clone(),
            api_key: cfg.api_key.clone(),
            temperature: cfg.temperature,
            policy: RetryPolicy {
                max_retries: cfg.max_retries,
                base_delay: Duration::from_millis(cfg.backoff_ms),
            },
            client: http::client(Duration::from_secs_f64(cfg.timeout_s))?,
        })
    }
}

impl ChatClient for OpenAiChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        });
        let resp = http::post_json(&self.client, &self.endpoint, self.api_key.as_ref(), &body, self.policy)?;
        resp.body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ClientError::Schema("missing choices[0].message.content".into()))
    }

    fn model(&self) -> String {
        self.model.clone()
    }
}
