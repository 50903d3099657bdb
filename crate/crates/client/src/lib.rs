//! Async client for chat-completions-compatible generation endpoints.
//!
//! One `ChatClient` is meant to be shared: it carries the concurrency
//! semaphore and the request pacer, so every clone observes the same global
//! limits. Retries happen inside a single concurrency permit, which keeps a
//! flapping endpoint from being hammered by freed-up slots.

use std::sync::Arc;
use std::time::Duration;

use cot_forge_core::GenerationConfig;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, Semaphore};
use tokio::time::Instant;

/// Name of the environment variable consulted for the API key when the
/// config does not set one.
pub const API_KEY_ENV: &str = "COT_FORGE_API_KEY";

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    3
}

fn default_max_concurrency() -> usize {
    4
}

fn default_backoff_base_ms() -> u64 {
    500
}

/// Where and how to talk to a generation endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    /// Absolute base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model_name: String,
    /// Bearer token. Falls back to `COT_FORGE_API_KEY` when unset.
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    /// Minimum spacing between consecutive request starts, across all
    /// concurrent callers. Zero disables pacing.
    pub min_request_interval_ms: u64,
    pub backoff_base_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model_name: String::new(),
            api_key: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_concurrency: default_max_concurrency(),
            min_request_interval_ms: 0,
            backoff_base_ms: default_backoff_base_ms(),
        }
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model_name: model_name.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !self.base_url.starts_with("http://") && !self.base_url.starts_with("https://") {
            return Err(ClientError::InvalidConfig(format!(
                "base_url must be an absolute http(s) URL, got '{}'",
                self.base_url
            )));
        }
        if self.model_name.is_empty() {
            return Err(ClientError::InvalidConfig("model_name must not be empty".to_string()));
        }
        if self.timeout_secs == 0 {
            return Err(ClientError::InvalidConfig("timeout_secs must be positive".to_string()));
        }
        if self.max_concurrency == 0 {
            return Err(ClientError::InvalidConfig("max_concurrency must be at least 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("endpoint failed after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Endpoint { status: Option<u16>, message: String, attempts: u32 },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

enum AttemptError {
    Retryable { status: Option<u16>, message: String },
    Terminal(ClientError),
}

/// Shareable endpoint client. Cloning is cheap and clones share rate limits.
#[derive(Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    config: EndpointConfig,
    api_key: Option<String>,
    permits: Arc<Semaphore>,
    next_start: Arc<Mutex<Option<Instant>>>,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let api_key = config.api_key.clone().or_else(|| std::env::var(API_KEY_ENV).ok());
        Ok(Self {
            http: reqwest::Client::new(),
            permits: Arc::new(Semaphore::new(config.max_concurrency)),
            next_start: Arc::new(Mutex::new(None)),
            config,
            api_key,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// One completion for one prompt, with retries on transient failures
    /// (HTTP 429, 5xx, timeouts). Other client errors are terminal.
    pub async fn complete(
        &self,
        prompt: &str,
        gen: &GenerationConfig,
    ) -> Result<String, ClientError> {
        if prompt.is_empty() {
            return Err(ClientError::EmptyPrompt);
        }
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");

        let mut attempts = 0;
        loop {
            self.pace().await;
            attempts += 1;
            match self.attempt(prompt, gen).await {
                Ok(text) => return Ok(text),
                Err(AttemptError::Terminal(e)) => return Err(e),
                Err(AttemptError::Retryable { status, message }) => {
                    if attempts > self.config.max_retries {
                        return Err(ClientError::Endpoint { status, message, attempts });
                    }
                    let backoff = self.backoff_delay(attempts);
                    tracing::debug!(
                        attempt = attempts,
                        ?status,
                        backoff_ms = backoff.as_millis() as u64,
                        "transient endpoint failure, retrying"
                    );
                    tokio::time::sleep(backoff).await;
                }
            }
        }
    }

    /// Complete every prompt, preserving input order in the output. Failures
    /// are per-item; the batch itself never aborts.
    pub async fn complete_batch(
        &self,
        prompts: &[String],
        gen: &GenerationConfig,
    ) -> Vec<Result<String, ClientError>> {
        let mut handles = Vec::with_capacity(prompts.len());
        for prompt in prompts {
            let client = self.clone();
            let prompt = prompt.clone();
            let gen = *gen;
            handles.push(tokio::spawn(async move { client.complete(&prompt, &gen).await }));
        }
        let mut results = Vec::with_capacity(handles.len());
        for handle in handles {
            results.push(handle.await.unwrap_or_else(|e| {
                Err(ClientError::Endpoint {
                    status: None,
                    message: format!("request task failed: {e}"),
                    attempts: 0,
                })
            }));
        }
        results
    }

    /// Reserve a start slot at least `min_request_interval` after the
    /// previous one, then wait for it.
    async fn pace(&self) {
        let interval = Duration::from_millis(self.config.min_request_interval_ms);
        if interval.is_zero() {
            return;
        }
        let start = {
            let mut next = self.next_start.lock().await;
            let now = Instant::now();
            let start = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(start + interval);
            start
        };
        tokio::time::sleep_until(start).await;
    }

    /// Exponential backoff with full jitter: uniform over (0, base * 2^k].
    fn backoff_delay(&self, failed_attempts: u32) -> Duration {
        let exp = failed_attempts.saturating_sub(1).min(10);
        let cap = self.config.backoff_base_ms.saturating_mul(1 << exp).max(1);
        Duration::from_millis(rand::rng().random_range(1..=cap))
    }

    async fn attempt(&self, prompt: &str, gen: &GenerationConfig) -> Result<String, AttemptError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: gen.temperature,
            max_tokens: gen.max_tokens,
        };
        let mut request = self
            .http
            .post(&url)
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }

        let response = match request.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() => {
                return Err(AttemptError::Retryable { status: None, message: e.to_string() });
            }
            Err(e) => {
                return Err(AttemptError::Terminal(ClientError::Endpoint {
                    status: None,
                    message: e.to_string(),
                    attempts: 1,
                }));
            }
        };

        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retryable {
                status: Some(status.as_u16()),
                message: format!("endpoint returned {status}"),
            });
        }
        if !status.is_success() {
            return Err(AttemptError::Terminal(ClientError::Endpoint {
                status: Some(status.as_u16()),
                message: format!("endpoint returned {status}"),
                attempts: 1,
            }));
        }

        let parsed: ChatResponse = response.json().await.map_err(|e| {
            AttemptError::Terminal(ClientError::MalformedResponse(e.to_string()))
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                AttemptError::Terminal(ClientError::MalformedResponse(
                    "reply carries no choices[0].message.content".to_string(),
                ))
            })?;
        Ok(content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_names_the_field() {
        let mut config = EndpointConfig::new("ftp://x", "m");
        assert!(matches!(config.validate(), Err(ClientError::InvalidConfig(m)) if m.contains("base_url")));

        config.base_url = "http://127.0.0.1:1".to_string();
        config.model_name = String::new();
        assert!(matches!(config.validate(), Err(ClientError::InvalidConfig(m)) if m.contains("model_name")));

        config.model_name = "m".to_string();
        config.timeout_secs = 0;
        assert!(matches!(config.validate(), Err(ClientError::InvalidConfig(m)) if m.contains("timeout")));

        config.timeout_secs = 5;
        config.max_concurrency = 0;
        assert!(matches!(config.validate(), Err(ClientError::InvalidConfig(m)) if m.contains("max_concurrency")));

        config.max_concurrency = 2;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn backoff_grows_with_attempts_and_stays_jittered() {
        let client = ChatClient::new(EndpointConfig::new("http://127.0.0.1:1", "m")).unwrap();
        for failed in 1..6u32 {
            let cap = 500u64 * (1 << (failed - 1));
            for _ in 0..50 {
                let d = client.backoff_delay(failed).as_millis() as u64;
                assert!(d >= 1 && d <= cap, "delay {d} outside (0, {cap}]");
            }
        }
    }

    #[test]
    fn request_body_matches_the_wire_contract() {
        let body = ChatRequest {
            model: "m-1",
            messages: [ChatMessage { role: "user", content: "hi" }],
            temperature: 0.0,
            max_tokens: 10,
        };
        let json = serde_json::to_value(&body).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "model": "m-1",
                "messages": [{"role": "user", "content": "hi"}],
                "temperature": 0.0,
                "max_tokens": 10
            })
        );
    }
}
