//! Blocking client for OpenAI-compatible Chat Completions and Embeddings
//! endpoints, with retry/backoff and a shared request gate.

use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("network error talking to {url}: {message} (retriable)")]
    Network { url: String, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
    #[error("endpoint reply carried no token logprobs")]
    MissingLogprobs,
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
}

/// Where and how to reach an OpenAI-compatible API.
///
/// Credentials are read from the environment variable named in
/// `api_key_env`, never stored inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    0.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_backoff_ms: 500,
        }
    }
}

/// Caps in-flight requests and enforces a minimum spacing between request
/// starts. One gate is shared by agent and judge calls against the same
/// endpoint.
pub struct RequestGate {
    state: Mutex<GateState>,
    cv: Condvar,
    max_in_flight: usize,
    min_interval: Duration,
}

struct GateState {
    in_flight: usize,
    last_start: Option<Instant>,
}

impl RequestGate {
    pub fn new(max_in_flight: usize, min_interval_ms: u64) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(GateState {
                in_flight: 0,
                last_start: None,
            }),
            cv: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
            min_interval: Duration::from_millis(min_interval_ms),
        })
    }

    pub fn unlimited() -> Arc<Self> {
        Self::new(usize::MAX, 0)
    }

    fn acquire(self: &Arc<Self>) -> GatePermit {
        let mut st = self.state.lock();
        while st.in_flight >= self.max_in_flight {
            self.cv.wait(&mut st);
        }
        st.in_flight += 1;
        if !self.min_interval.is_zero() {
            if let Some(last) = st.last_start {
                let elapsed = last.elapsed();
                if elapsed < self.min_interval {
                    let wait = self.min_interval - elapsed;
                    drop(st);
                    std::thread::sleep(wait);
                    st = self.state.lock();
                }
            }
        }
        st.last_start = Some(Instant::now());
        drop(st);
        GatePermit {
            gate: Arc::clone(self),
        }
    }
}

struct GatePermit {
    gate: Arc<RequestGate>,
}

impl Drop for GatePermit {
    fn drop(&mut self) {
        let mut st = self.gate.state.lock();
        st.in_flight -= 1;
        drop(st);
        self.gate.cv.notify_one();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatReply {
    pub content: String,
    pub token_logprobs: Option<Vec<f64>>,
}

impl ChatReply {
    /// Arithmetic mean of the per-token log-probabilities on the wire.
    pub fn mean_logprob(&self) -> Option<f64> {
        self.token_logprobs.as_ref().and_then(|t| {
            if t.is_empty() {
                None
            } else {
                Some(t.iter().sum::<f64>() / t.len() as f64)
            }
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<bool>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChoiceMessage,
    #[serde(default)]
    logprobs: Option<LogprobsBlock>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct LogprobsBlock {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

pub struct ChatClient {
    endpoint: LlmEndpoint,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
    gate: Arc<RequestGate>,
}

impl ChatClient {
    pub fn new(endpoint: LlmEndpoint, retry: RetryPolicy, gate: Arc<RequestGate>) -> Self {
        Self {
            endpoint,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
            retry,
            gate,
        }
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }

    pub fn chat(&self, messages: &[ChatMessage], want_logprobs: bool) -> Result<ChatReply, LlmError> {
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.endpoint.model,
            messages,
            temperature: self.endpoint.temperature,
            logprobs: if want_logprobs { Some(true) } else { None },
        };
        let raw = post_with_retry(
            &self.http,
            &url,
            &serde_json::to_value(&body).expect("chat request serializes"),
            self.endpoint.api_key_env.as_deref(),
            self.retry,
            &self.gate,
        )?;
        let parsed: ChatResponse =
            serde_json::from_str(&raw).map_err(|e| LlmError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Malformed("reply carried no choices".into()))?;
        let content = choice.message.content.unwrap_or_default();
        let token_logprobs = choice
            .logprobs
            .map(|b| b.content.into_iter().map(|t| t.logprob).collect::<Vec<_>>())
            .filter(|v| !v.is_empty());
        if want_logprobs && token_logprobs.is_none() {
            return Err(LlmError::MissingLogprobs);
        }
        Ok(ChatReply {
            content,
            token_logprobs,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
}

pub struct EmbeddingsClient {
    endpoint: LlmEndpoint,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
    gate: Arc<RequestGate>,
}

impl EmbeddingsClient {
    pub fn new(endpoint: LlmEndpoint, retry: RetryPolicy, gate: Arc<RequestGate>) -> Self {
        Self {
            endpoint,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
            retry,
            gate,
        }
    }

    pub fn embed(&self, input: &str) -> Result<Vec<f32>, LlmError> {
        let url = format!("{}/embeddings", self.endpoint.base_url.trim_end_matches('/'));
        let body = serde_json::json!({ "model": self.endpoint.model, "input": input });
        let raw = post_with_retry(
            &self.http,
            &url,
            &body,
            self.endpoint.api_key_env.as_deref(),
            self.retry,
            &self.gate,
        )?;
        let parsed: EmbeddingsResponse =
            serde_json::from_str(&raw).map_err(|e| LlmError::Malformed(e.to_string()))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|r| r.embedding)
            .ok_or_else(|| LlmError::Malformed("embeddings reply carried no rows".into()))
    }
}

fn post_with_retry(
    http: &reqwest::blocking::Client,
    url: &str,
    body: &serde_json::Value,
    api_key_env: Option<&str>,
    retry: RetryPolicy,
    gate: &Arc<RequestGate>,
) -> Result<String, LlmError> {
    let api_key = match api_key_env {
        Some(var) => Some(
            std::env::var(var).map_err(|_| LlmError::MissingCredential(var.to_string()))?,
        ),
        None => None,
    };
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let _permit = gate.acquire();
        let mut req = http.post(url).json(body);
        if let Some(key) = &api_key {
            req = req.bearer_auth(key);
        }
        let outcome = req.send();
        match outcome {
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().unwrap_or_default();
                if status.is_success() {
                    return Ok(text);
                }
                let retriable = status.as_u16() == 429 || status.is_server_error();
                if !retriable || attempt >= retry.max_attempts {
                    return Err(LlmError::Http {
                        status: status.as_u16(),
                        body: truncate(&text, 400),
                    });
                }
                log::warn!("{url} returned {status}, retrying (attempt {attempt})");
            }
            Err(e) => {
                if attempt >= retry.max_attempts {
                    return Err(LlmError::Network {
                        url: url.to_string(),
                        message: e.to_string(),
                    });
                }
                log::warn!("{url} request failed ({e}), retrying (attempt {attempt})");
            }
        }
        let backoff = retry.base_backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
        std::thread::sleep(Duration::from_millis(backoff));
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}
