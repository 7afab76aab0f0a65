//! Blocking JSON POST with bearer auth and exponential-backoff retries,
//! shared by the embeddings and chat-completions clients.

use std::fmt;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// An API key that never appears in `Debug` output or logs.
#[derive(Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("rate limited after {0} retries")]
    RateLimited(u32),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("response is not JSON: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

pub fn client(timeout: Duration) -> Result<Client, HttpError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| HttpError::Network(e.to_string()))
}

/// A successful response body and the number of retries spent getting it.
#[derive(Debug)]
pub struct Response {
    pub body: Value,
    pub retries: u32,
}

/// POSTs `body` as JSON. 429, 5xx, timeouts and connection failures are
/// retried; 401/403 and other 4xx fail immediately.
pub fn post_json(
    client: &Client,
    url: &str,
    api_key: Option<&Secret>,
    body: &Value,
    policy: RetryPolicy,
) -> Result<Response, HttpError> {
    let mut attempt = 0u32;
    loop {
        let mut req = client.post(url).json(body);
        if let Some(key) = api_key.filter(|k| !k.is_empty()) {
            req = req.bearer_auth(key.expose());
        }
        let failure = match req.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return resp
                        .json::<Value>()
                        .map(|body| Response { body, retries: attempt })
                        .map_err(|e| HttpError::Decode(e.to_string()));
                }
                if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                    return Err(HttpError::Auth(status.as_u16()));
                }
                let text = resp.text().unwrap_or_default();
                if status == StatusCode::TOO_MANY_REQUESTS {
                    HttpError::RateLimited(attempt)
                } else if status.is_server_error() {
                    HttpError::Status {
                        status: status.as_u16(),
                        body: truncate(&text, 200),
                    }
                } else {
                    return Err(HttpError::Status {
                        status: status.as_u16(),
                        body: truncate(&text, 200),
                    });
                }
            }
            Err(e) if e.is_timeout() => HttpError::Timeout,
            Err(e) => HttpError::Network(e.to_string()),
        };
        if attempt >= policy.max_retries {
            return Err(match failure {
                HttpError::RateLimited(_) => HttpError::RateLimited(attempt),
                other => other,
            });
        }
        tracing::debug!(url, attempt, error = %failure, "retrying request");
        thread::sleep(policy.delay(attempt));
        attempt += 1;
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_owned(),
    }
}
