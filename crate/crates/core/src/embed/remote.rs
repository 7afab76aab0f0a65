use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use serde_json::{json, Value};

use super::{EmbedError, Embedder, EmbeddingVector, ProviderConfig, ProviderKind};
use crate::http::{self, RetryPolicy};

/// Client for an OpenAI-compatible `/embeddings` endpoint.
///
/// `endpoint` is the full URL that accepts `{"model", "input"}` POSTs.
#[derive(Debug)]
pub struct RemoteEmbedder {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
    retries: AtomicU32,
}

impl RemoteEmbedder {
    pub fn new(cfg: ProviderConfig) -> Result<Self, EmbedError> {
        let cfg = ProviderConfig {
            kind: ProviderKind::Remote,
            ..cfg
        };
        cfg.validate()?;
        let client = http::client(cfg.timeout())?;
        Ok(Self {
            cfg,
            client,
            retries: AtomicU32::new(0),
        })
    }

    /// Total retries spent across all requests so far.
    pub fn retry_count(&self) -> u32 {
        self.retries.load(Ordering::Relaxed)
    }

    fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.cfg.max_retries,
            base_delay: Duration::from_millis(self.cfg.backoff_ms),
        }
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let endpoint = self.cfg.endpoint.as_deref().unwrap_or_default();
        let body = json!({
            "model": self.cfg.model_name.as_deref().unwrap_or_default(),
            "input": batch,
        });
        let resp = http::post_json(&self.client, endpoint, self.cfg.api_key.as_ref(), &body, self.policy())?;
        self.retries.fetch_add(resp.retries, Ordering::Relaxed);
        parse_embeddings(&resp.body, batch.len())
    }
}

/// Reads `data[i].embedding`, ordered by `data[i].index` when present.
fn parse_embeddings(body: &Value, expected: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| EmbedError::Schema("missing \"data\" array".into()))?;
    if data.len() != expected {
        return Err(EmbedError::Schema(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let idx = match item.get("index") {
            Some(v) => v
                .as_u64()
                .map(|i| i as usize)
                .ok_or_else(|| EmbedError::Schema("non-integer \"index\"".into()))?,
            None => pos,
        };
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Schema(format!("item {pos} has no \"embedding\" array")))?
            .iter()
            .map(|x| x.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| EmbedError::Schema(format!("item {pos} has non-numeric values")))?;
        let slot = slots
            .get_mut(idx)
            .ok_or_else(|| EmbedError::Schema(format!("index {idx} out of range")))?;
        if slot.replace(values).is_some() {
            return Err(EmbedError::Schema(format!("duplicate index {idx}")));
        }
    }
    let vectors: Vec<Vec<f64>> = slots
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| EmbedError::Schema("missing indices in response".into()))?;
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(EmbedError::Schema("ragged or empty embeddings".into()));
    }
    Ok(vectors.into_iter().map(EmbeddingVector::normalized).collect())
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> String {
        self.cfg.model_name.clone().unwrap_or_else(|| "remote".into())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.cfg.batch_size) {
            let vectors = self.embed_batch(batch)?;
            if let (Some(first), Some(prev)) = (vectors.first(), out.first()) {
                let prev: &EmbeddingVector = prev;
                if first.dim() != prev.dim() {
                    return Err(EmbedError::Schema(format!(
                        "dimension changed between batches ({} vs {})",
                        prev.dim(),
                        first.dim()
                    )));
                }
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}
