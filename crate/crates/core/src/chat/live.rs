//! Live OpenAI-compatible chat-completions backend.
//!
//! POSTs to `<base_url>/chat/completions` with a single user message and
//! reads the first choice's message content. Credentials come from the
//! `PPIBENCH_API_KEY` environment variable; everything else (base URL,
//! timeout, RPM) is configuration.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, SharedLimiter};

pub const API_KEY_ENV: &str = "PPIBENCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: usize,
}

fn default_timeout_s() -> u64 {
    120
}

fn default_rpm() -> usize {
    60
}

pub struct LiveBackend {
    client: reqwest::Client,
    base_url: String,
    api_key: String,
    limiter: SharedLimiter,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: String,
}

impl LiveBackend {
    pub fn new(config: &LiveConfig, api_key: String) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key,
            limiter: SharedLimiter::per_minute(config.requests_per_minute),
        })
    }

    /// Reads the API key from `PPIBENCH_API_KEY`.
    pub fn from_env(config: &LiveConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| BackendError::Auth(format!("{API_KEY_ENV} is not set")))?;
        Self::new(config, api_key)
    }
}

#[async_trait]
impl ChatBackend for LiveBackend {
    fn tag(&self) -> &str {
        "live"
    }

    async fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.limiter.acquire().await;
        let body = WireRequest {
            model: &request.model,
            messages: vec![WireMessage {
                role: "user",
                content: &request.prompt_text,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| BackendError::Transient(format!("request failed: {e}")))?;

        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(BackendError::Auth(format!("endpoint returned {status}")));
        }
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(BackendError::Transient(format!("endpoint returned {status}")));
        }
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            let snippet: String = body.chars().take(200).collect();
            return Err(BackendError::Fatal(format!("endpoint returned {status}: {snippet}")));
        }
        let envelope: WireResponse = response
            .json()
            .await
            .map_err(|e| BackendError::MalformedEnvelope(e.to_string()))?;
        envelope
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::MalformedEnvelope("no choices in response".into()))
    }
}
