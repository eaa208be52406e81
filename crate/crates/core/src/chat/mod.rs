//! Chat-completion dispatch: request/exchange types, pre-flight checks,
//! retries, and the backend abstraction (live HTTP or gold replay).

mod limiter;
mod live;
mod replay;
mod schedule;

pub use limiter::{SharedLimiter, SlidingWindowLimiter};
pub use live::{LiveBackend, LiveConfig, API_KEY_ENV};
pub use replay::{gold_replay, CorruptionParams, ReplayBackend, ReplayLine};
pub use schedule::{build_schedule, shuffle_items, ChunkKey, WorkItem};

use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folds::TokenEstimator;

/// Limits a backend declares for a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelLimits {
    pub context_window: usize,
    pub temperature_min: f64,
    pub temperature_max: f64,
}

impl Default for ModelLimits {
    fn default() -> Self {
        Self {
            context_window: 4096,
            temperature_min: 0.0,
            temperature_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub prompt_text: String,
}

/// One completed call, response stored verbatim for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub backend: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response envelope: {0}")]
    MalformedEnvelope(String),
    #[error("unknown sentence id {0}")]
    UnknownSentence(String),
    #[error("{0}")]
    Fatal(String),
}

impl BackendError {
    fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("temperature {got} outside the backend range [{min}, {max}]")]
    TemperatureOutOfRange { got: f64, min: f64, max: f64 },
    #[error(
        "prompt (~{prompt_tokens} tokens) plus max_tokens {max_tokens} exceeds the {context_window}-token context window"
    )]
    ContextWindowExceeded {
        prompt_tokens: usize,
        max_tokens: usize,
        context_window: usize,
    },
    #[error("retries exhausted after {attempts} attempt(s): {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Backend(BackendError),
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    /// Short tag recorded on every exchange ("live", "replay", ...).
    fn tag(&self) -> &str;
    async fn send(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << (attempt - 1).min(16)))
    }
}

/// Dispatches one request. Pre-flight checks run before any network
/// traffic: temperature against the declared range, and estimated prompt
/// tokens plus `max_tokens` against the context window. Transient backend
/// failures retry with exponential backoff up to the policy's attempt cap.
pub async fn complete(
    request: ChatRequest,
    backend: &dyn ChatBackend,
    limits: &ModelLimits,
    retry: &RetryPolicy,
    estimator: &dyn TokenEstimator,
) -> Result<ChatExchange, ClientError> {
    if request.temperature < limits.temperature_min || request.temperature > limits.temperature_max
    {
        return Err(ClientError::TemperatureOutOfRange {
            got: request.temperature,
            min: limits.temperature_min,
            max: limits.temperature_max,
        });
    }
    let prompt_tokens = estimator.estimate(&request.prompt_text);
    if prompt_tokens + request.max_tokens > limits.context_window {
        return Err(ClientError::ContextWindowExceeded {
            prompt_tokens,
            max_tokens: request.max_tokens,
            context_window: limits.context_window,
        });
    }

    let max_attempts = retry.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        let started = std::time::Instant::now();
        match backend.send(&request).await {
            Ok(response_text) => {
                return Ok(ChatExchange {
                    request,
                    response_text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempt_count: attempt,
                    backend: backend.tag().to_string(),
                    timestamp: Utc::now(),
                })
            }
            Err(err) if err.is_transient() && attempt < max_attempts => {
                tokio::time::sleep(retry.delay(attempt)).await;
            }
            Err(err) if err.is_transient() => {
                return Err(ClientError::RetriesExhausted {
                    attempts: attempt,
                    last: err.to_string(),
                })
            }
            Err(err) => return Err(ClientError::Backend(err)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::ByteHeuristic;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct FlakyBackend {
        fail_first: u32,
        calls: AtomicU32,
    }

    #[async_trait]
    impl ChatBackend for FlakyBackend {
        fn tag(&self) -> &str {
            "flaky"
        }
        async fn send(&self, _request: &ChatRequest) -> Result<String, BackendError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            if call <= self.fail_first {
                Err(BackendError::Transient("overloaded".into()))
            } else {
                Ok("Done".into())
            }
        }
    }

    fn request(temperature: f64, max_tokens: usize) -> ChatRequest {
        ChatRequest {
            model: "test-model".into(),
            temperature,
            max_tokens,
            prompt_text: "x".repeat(400),
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1,
        }
    }

    #[tokio::test]
    async fn temperature_out_of_range_is_preflight() {
        let backend = FlakyBackend {
            fail_first: 0,
            calls: AtomicU32::new(0),
        };
        let err = complete(
            request(2.5, 10),
            &backend,
            &ModelLimits::default(),
            &fast_retry(),
            &ByteHeuristic,
        )
        .await
        .unwrap_err();
        assert!(matches!(err, ClientError::TemperatureOutOfRange { .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
    }

    #[tokio::test]
    async fn oversized_prompt_is_preflight() {
        let backend = FlakyBackend {
            fail_first: 0,
            calls: AtomicU32::new(0),
        };
        // 400 bytes -> 100 tokens; 100 + 4000 > 4096.
        let err = complete(
            request(0.0, 4000),
            &backend,
            &ModelLimits::default(),
            &fast_retry(),
            &ByteHeuristic,
        )
        .await
        .unwrap_err();
        assert!(matches!(err, ClientError::ContextWindowExceeded { .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
    }

    #[tokio::test]
    async fn transient_failures_retry_then_succeed() {
        let backend = FlakyBackend {
            fail_first: 2,
            calls: AtomicU32::new(0),
        };
        let exchange = complete(
            request(0.0, 10),
            &backend,
            &ModelLimits::default(),
            &fast_retry(),
            &ByteHeuristic,
        )
        .await
        .unwrap();
        assert_eq!(exchange.attempt_count, 3);
        assert_eq!(exchange.response_text, "Done");
        assert_eq!(exchange.backend, "flaky");
    }

    #[tokio::test]
    async fn exhausted_retries_surface() {
        let backend = FlakyBackend {
            fail_first: 99,
            calls: AtomicU32::new(0),
        };
        let err = complete(
            request(0.0, 10),
            &backend,
            &ModelLimits::default(),
            &fast_retry(),
            &ByteHeuristic,
        )
        .await
        .unwrap_err();
        assert!(matches!(
            err,
            ClientError::RetriesExhausted { attempts: 3, .. }
        ));
    }
}
