//! The query side of the interaction loop: a prompt and decoding parameters
//! go in, a set of completions comes out.
//!
//! Backends are pluggable through [`LmBackend`]. [`query_lm`] wraps any
//! backend with retry, stop-sequence stripping and the completion cap;
//! [`apply_blocklist`] hides completions that contain blocked keywords.

mod blocklist;
pub mod config;
mod http;
pub mod mock;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocklist::{apply_blocklist, contains_keyword, Blocklist, FILTERED_PLACEHOLDER};
pub use http::HttpBackend;
pub use mock::{mock_complete, FixtureTable, MockBackend, MockStyle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    pub num_completions: u32,
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), LmError> {
        if !(self.temperature >= 0.0) {
            return Err(LmError::InvalidParams(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if self.top_k == Some(0) {
            return Err(LmError::InvalidParams("top_k must be positive".into()));
        }
        if self.max_tokens == 0 {
            return Err(LmError::InvalidParams("max_tokens must be at least 1".into()));
        }
        if self.num_completions == 0 {
            return Err(LmError::InvalidParams("num_completions must be at least 1".into()));
        }
        Ok(())
    }
}

/// A prompt sent to a backend. An empty prompt is legal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub request_id: String,
}

impl Prompt {
    pub fn new(text: impl Into<String>, request_id: impl Into<String>) -> Self {
        Self { text: text.into(), request_id: request_id.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    StopSequence,
    Length,
    Backend,
}

/// Completion text exactly as the backend returned it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub filtered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub completions: Vec<RawCompletion>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionSet {
    pub completions: Vec<Completion>,
    pub latency_ms: u64,
}

impl CompletionSet {
    /// Completions that may be shown to the user.
    pub fn surfaced(&self) -> impl Iterator<Item = &Completion> {
        self.completions.iter().filter(|c| !c.filtered)
    }

    pub fn all_filtered(&self) -> bool {
        self.completions.iter().all(|c| c.filtered)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum LmError {
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("invalid decoding parameters: {0}")]
    InvalidParams(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait LmBackend: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, prompt: &Prompt, params: &DecodingParams) -> Result<BackendReply, LmError>;
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self { max_attempts: 3, base_delay: Duration::ZERO }
    }
}

/// Queries `backend`, retrying rate-limit errors with exponential backoff.
///
/// Each completion is cut at the earliest stop sequence and the result never
/// holds more than `params.num_completions` entries.
pub fn query_lm(
    prompt: &Prompt,
    params: &DecodingParams,
    backend: &dyn LmBackend,
    retry: &RetryPolicy,
) -> Result<CompletionSet, LmError> {
    params.validate()?;
    let mut attempt = 0;
    let reply = loop {
        match backend.complete(prompt, params) {
            Ok(reply) => break reply,
            Err(LmError::RateLimited(msg)) => {
                attempt += 1;
                if attempt >= retry.max_attempts.max(1) {
                    return Err(LmError::RateLimited(msg));
                }
                let delay = retry.base_delay * 2u32.pow(attempt - 1);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
            Err(e) => return Err(e),
        }
    };
    let completions = reply
        .completions
        .into_iter()
        .take(params.num_completions as usize)
        .map(|raw| strip_stop_sequences(raw, &params.stop_sequences))
        .collect();
    Ok(CompletionSet { completions, latency_ms: reply.latency_ms })
}

fn strip_stop_sequences(raw: RawCompletion, stops: &[String]) -> Completion {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| raw.text.find(s.as_str()))
        .min();
    match cut {
        Some(at) => Completion {
            text: raw.text[..at].to_string(),
            finish_reason: FinishReason::StopSequence,
            filtered: false,
        },
        None => Completion { text: raw.text, finish_reason: raw.finish_reason, filtered: false },
    }
}

/// A backend bundled with the blocklist and retry policy of a deployment.
#[derive(Clone)]
pub struct LmClient {
    backend: Arc<dyn LmBackend>,
    blocklist: Blocklist,
    retry: RetryPolicy,
}

impl LmClient {
    pub fn new(backend: Arc<dyn LmBackend>, blocklist: Blocklist) -> Self {
        Self { backend, blocklist, retry: RetryPolicy::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn blocklist(&self) -> &Blocklist {
        &self.blocklist
    }

    pub fn query(&self, prompt: &Prompt, params: &DecodingParams) -> Result<CompletionSet, LmError> {
        let set = query_lm(prompt, params, self.backend.as_ref(), &self.retry)?;
        Ok(apply_blocklist(set, &self.blocklist))
    }
}

impl std::fmt::Debug for LmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LmClient")
            .field("model_id", &self.backend.model_id())
            .field("blocklist", &self.blocklist)
            .finish()
    }
}
