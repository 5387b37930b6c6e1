use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendReply, DecodingParams, FinishReason, LmBackend, LmError, Prompt, RawCompletion};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Client for a completion-style JSON endpoint.
///
/// The request body carries `model`, `prompt`, `temperature`, `top_k`,
/// `max_tokens`, `stop` and `n`; the reply is expected to hold a `choices`
/// array of `{text, finish_reason}` objects.
pub struct HttpBackend {
    model_id: String,
    remote_model: String,
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    n: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

impl HttpBackend {
    pub fn new(
        model_id: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LmError::Config(format!("building HTTP client: {e}")))?;
        let model_id = model_id.into();
        Ok(Self {
            remote_model: model_id.clone(),
            model_id,
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }

    /// Name sent in the `model` field when it differs from the local id.
    pub fn with_remote_model(mut self, name: impl Into<String>) -> Self {
        self.remote_model = name.into();
        self
    }
}

impl LmBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &Prompt, params: &DecodingParams) -> Result<BackendReply, LmError> {
        let body = CompletionRequest {
            model: &self.remote_model,
            prompt: &prompt.text,
            temperature: params.temperature,
            top_k: params.top_k,
            max_tokens: params.max_tokens,
            stop: &params.stop_sequences,
            n: params.num_completions,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LmError::BackendFailure(format!("request timed out: {e}"))
            } else {
                LmError::BackendFailure(e.to_string())
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(LmError::RateLimited(format!("{} returned 429", self.endpoint)));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LmError::BackendFailure(format!("HTTP {status}: {}", text.trim())));
        }
        let parsed: CompletionResponse = resp
            .json()
            .map_err(|e| LmError::BackendFailure(format!("malformed response body: {e}")))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let completions = parsed
            .choices
            .into_iter()
            .map(|c| RawCompletion {
                text: c.text,
                finish_reason: match c.finish_reason.as_deref() {
                    Some("stop") => FinishReason::StopSequence,
                    Some("length") => FinishReason::Length,
                    _ => FinishReason::Backend,
                },
            })
            .collect();
        Ok(BackendReply { completions, latency_ms })
    }
}
