//! Provider-agnostic access to generator and judge models.
//!
//! A [`Client`] wraps one configured [`ModelEndpoint`] and a [`Transport`]
//! (HTTP or mock), adding the shared rate limiter and retry policy.

mod clock;
mod http;
mod judge;
mod limiter;
pub mod mock;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, FakeClock, SystemClock};
pub use http::HttpTransport;
pub use judge::{build_judge_prompt, parse_judge_response, render_scores, JudgeParseError, JudgeResponse};
pub use limiter::RateLimiter;

use crate::generation::QaSample;
use crate::validation::CriteriaRegistry;

/// A chat-style prompt: one system message and one user message, with an
/// optional image reference for vision-capable judges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub system: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Judge,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Judge => "judge",
        })
    }
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub endpoint_id: String,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    pub role: Role,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    /// Requests per second; 0 disables limiting.
    #[serde(default)]
    pub rps: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Upper end of the judge's native score scale (e.g. 10 for 0-10).
    #[serde(default = "default_scale")]
    pub score_scale: f64,
}

impl ModelEndpoint {
    pub fn new(endpoint_id: &str, role: Role) -> Self {
        ModelEndpoint {
            endpoint_id: endpoint_id.into(),
            base_url: String::new(),
            model: String::new(),
            role,
            auth_env: None,
            rps: 0.0,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            score_scale: default_scale(),
        }
    }
}

/// Failure of a single transport attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("server error {0}")]
    Server(u16),
    #[error("network error: {0}")]
    Network(String),
    #[error("client error {status}: {message}")]
    Client { status: u16, message: String },
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

impl TransportError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            TransportError::Timeout
                | TransportError::RateLimited
                | TransportError::Server(_)
                | TransportError::Network(_)
        )
    }
}

/// Terminal outcome of a request after retries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("{endpoint}: timed out after {attempts} attempts")]
    Timeout { endpoint: String, attempts: u32 },
    #[error("{endpoint}: authentication failed: {message}")]
    Auth { endpoint: String, message: String },
    #[error("{endpoint}: rate limit not lifted after {attempts} attempts")]
    RateLimitExhausted { endpoint: String, attempts: u32 },
    #[error("{endpoint}: unavailable after {attempts} attempts: {message}")]
    Unavailable {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("{endpoint}: request rejected: {message}")]
    Rejected { endpoint: String, message: String },
    #[error("{endpoint}: endpoint role is {actual}, expected {expected}")]
    WrongRole {
        endpoint: String,
        expected: Role,
        actual: Role,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Parse(#[from] JudgeParseError),
}

/// Sends one prompt to one endpoint, without retries.
pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &ModelEndpoint, prompt: &PromptSpec) -> Result<String, TransportError>;
}

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Clone)]
pub struct Client {
    endpoint: ModelEndpoint,
    transport: Arc<dyn Transport>,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client")
            .field("endpoint", &self.endpoint.endpoint_id)
            .finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(endpoint: ModelEndpoint, transport: Arc<dyn Transport>) -> Self {
        Client::with_clock(endpoint, transport, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(
        endpoint: ModelEndpoint,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let limiter = Arc::new(RateLimiter::new(endpoint.rps));
        Client {
            endpoint,
            transport,
            limiter,
            clock,
        }
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn id(&self) -> &str {
        &self.endpoint.endpoint_id
    }

    fn require_role(&self, expected: Role) -> Result<(), ProviderError> {
        if self.endpoint.role == expected {
            Ok(())
        } else {
            Err(ProviderError::WrongRole {
                endpoint: self.endpoint.endpoint_id.clone(),
                expected,
                actual: self.endpoint.role,
            })
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = Duration::from_millis(self.endpoint.backoff_ms);
        base.saturating_mul(1u32 << attempt.min(16)).min(MAX_BACKOFF)
    }

    fn send_with_retries(&self, prompt: &PromptSpec) -> Result<String, ProviderError> {
        let id = &self.endpoint.endpoint_id;
        let attempts_allowed = self.endpoint.retries + 1;
        let mut attempt = 0;
        loop {
            self.limiter.acquire(self.clock.as_ref());
            let err = match self.transport.send(&self.endpoint, prompt) {
                Ok(text) => return Ok(text),
                Err(e) => e,
            };
            attempt += 1;
            if err.is_transient() && attempt < attempts_allowed {
                log::debug!("{id}: attempt {attempt} failed ({err}), retrying");
                self.clock.sleep(self.backoff(attempt - 1));
                continue;
            }
            return Err(match err {
                TransportError::Timeout => ProviderError::Timeout {
                    endpoint: id.clone(),
                    attempts: attempt,
                },
                TransportError::RateLimited => ProviderError::RateLimitExhausted {
                    endpoint: id.clone(),
                    attempts: attempt,
                },
                TransportError::Auth(message) => ProviderError::Auth {
                    endpoint: id.clone(),
                    message,
                },
                TransportError::Server(status) => ProviderError::Unavailable {
                    endpoint: id.clone(),
                    attempts: attempt,
                    message: format!("status {status}"),
                },
                TransportError::Network(message) => ProviderError::Unavailable {
                    endpoint: id.clone(),
                    attempts: attempt,
                    message,
                },
                TransportError::Client { status, message } => ProviderError::Rejected {
                    endpoint: id.clone(),
                    message: format!("status {status}: {message}"),
                },
                TransportError::BadResponse(message) => ProviderError::Rejected {
                    endpoint: id.clone(),
                    message,
                },
            });
        }
    }

    /// Text completion on a generator endpoint.
    pub fn complete(&self, prompt: &PromptSpec) -> Result<String, ProviderError> {
        self.require_role(Role::Generator)?;
        self.send_with_retries(prompt)
    }

    /// Scores `sample` on every registered criterion.
    pub fn judge(
        &self,
        sample: &QaSample,
        image_uri: Option<&str>,
        registry: &CriteriaRegistry,
    ) -> Result<JudgeResponse, JudgeError> {
        self.require_role(Role::Judge)?;
        let prompt = build_judge_prompt(sample, image_uri, registry, self.endpoint.score_scale);
        let raw = self.send_with_retries(&prompt)?;
        let resp = parse_judge_response(
            &raw,
            &self.endpoint.endpoint_id,
            &sample.sample_id,
            registry,
            self.endpoint.score_scale,
        )?;
        for w in &resp.warnings {
            log::warn!("{}/{}: {w}", self.endpoint.endpoint_id, sample.sample_id);
        }
        Ok(resp)
    }
}

/// Validates an ensemble: odd size of at least three, distinct ids, judge roles.
pub fn check_ensemble(judges: &[Client]) -> Result<(), String> {
    if judges.len() < 3 || judges.len().is_multiple_of(2) {
        return Err(format!(
            "ensemble must have an odd size 2n+1 with n >= 1, got {}",
            judges.len()
        ));
    }
    let mut ids = HashSet::new();
    for j in judges {
        if j.endpoint.role != Role::Judge {
            return Err(format!("{} is not a judge endpoint", j.id()));
        }
        if !ids.insert(j.id()) {
            return Err(format!("duplicate judge endpoint id {}", j.id()));
        }
    }
    Ok(())
}
