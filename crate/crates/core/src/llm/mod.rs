//! Text generation backends behind one interface, with retry handling.

mod http;
mod mock;

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TaskKind;
use crate::parse::extract_response;
use crate::prompt::INST_CLOSE;

pub use http::HttpBackend;
pub use mock::{input_hash, MockBackend, ScriptEntry, UNSCRIPTED};

pub const TOKEN_ENV: &str = "NEWSGRAPH_LLM_TOKEN";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("backend rejected the request with status {0}: {1}")]
    BackendRejected(u16, String),
    #[error("gave up after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("unrecognized response body: {0}")]
    MalformedResponse(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

impl LlmError {
    /// Transport failures, timeouts, 5xx and 429 are worth another attempt.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Timeout | LlmError::TransportError(_) => true,
            LlmError::BackendRejected(status, _) => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// Prompt in, continuation out.
    #[default]
    Completion,
    /// Chat endpoint receiving the rendered prompt as one raw user message.
    Chat,
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    #[serde(default)]
    pub api_style: ApiStyle,
}

fn default_max_new_tokens() -> u32 {
    1500
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_max_retries() -> u32 {
    3
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            model_id: String::new(),
            max_new_tokens: default_max_new_tokens(),
            temperature: 0.0,
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            auth_token: None,
            api_style: ApiStyle::Completion,
        }
    }
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("endpoint_url", &self.endpoint_url)
            .field("model_id", &self.model_id)
            .field("max_new_tokens", &self.max_new_tokens)
            .field("temperature", &self.temperature)
            .field("timeout_s", &self.timeout_s)
            .field("max_retries", &self.max_retries)
            .field("auth_token", &self.auth_token.as_ref().map(|_| "<redacted>"))
            .field("api_style", &self.api_style)
            .finish()
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_new_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_new_tokens must be at least 1".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::InvalidConfig("timeout_s must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidConfig("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// Takes the auth token from the environment when set there.
    pub fn with_env_token(mut self) -> Self {
        if let Ok(token) = std::env::var(TOKEN_ENV) {
            if !token.trim().is_empty() {
                self.auth_token = Some(token.trim().to_string());
            }
        }
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }
}

/// One generation call. `task` and `input` identify the call for scripted
/// backends; remote backends only look at `prompt`.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub task: TaskKind,
    pub input: &'a str,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
    pub attempt_count: u32,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// A single attempt. Returns the raw text the backend produced, which
    /// may include an echo of the prompt.
    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, LlmError>;
}

/// Exponential backoff: `base * factor^n`, stretched by up to `jitter`
/// (a fraction) and capped. With `factor >= 1 + jitter` the uncapped
/// sequence never shrinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub jitter: f64,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2.0,
            jitter: 0.25,
            cap: Duration::from_secs(60),
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (0-based). `sample` is in [0, 1).
    pub fn delay(&self, retry: u32, sample: f64) -> Duration {
        let exp = self.factor.powi(retry.min(64) as i32);
        let secs = self.base.as_secs_f64() * exp * (1.0 + self.jitter * sample.clamp(0.0, 1.0));
        Duration::from_secs_f64(secs.min(self.cap.as_secs_f64()))
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Wraps a backend with retries, echo stripping and timing.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    max_retries: u32,
    backoff: Backoff,
    sleeper: Sleeper,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("max_retries", &self.max_retries)
            .field("backoff", &self.backoff)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, max_retries: u32) -> Self {
        Self {
            backend,
            max_retries,
            backoff: Backoff::default(),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    /// Gateway over the HTTP backend described by `config`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, LlmError> {
        let backend = HttpBackend::new(config.clone())?;
        Ok(Self::new(Arc::new(backend), config.max_retries))
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    /// Replaces `thread::sleep` between attempts, e.g. to record delays.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, LlmError> {
        if request.prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = Instant::now();
        let mut attempt: u32 = 0;
        loop {
            attempt += 1;
            match self.backend.complete(request) {
                Ok(raw) => {
                    return Ok(GenerationResult {
                        text: strip_echo(&raw, request.prompt),
                        latency_ms: started.elapsed().as_millis() as u64,
                        backend_id: self.backend.id().to_string(),
                        attempt_count: attempt,
                    })
                }
                Err(err) if err.is_transient() => {
                    if attempt > self.max_retries {
                        return Err(LlmError::RetriesExhausted {
                            attempts: attempt,
                            last: err.to_string(),
                        });
                    }
                    let delay = self.backoff.delay(attempt - 1, rand::rng().random::<f64>());
                    log::warn!(
                        "{} attempt {attempt} for {} failed ({err}); retrying in {:.1}s",
                        self.backend.id(),
                        request.task,
                        delay.as_secs_f64()
                    );
                    (self.sleeper)(delay);
                }
                Err(err) => return Err(err),
            }
        }
    }
}

/// Removes an echoed prompt. Output that does not repeat the prompt is
/// returned untouched.
fn strip_echo(raw: &str, prompt: &str) -> String {
    if let Some(rest) = raw.strip_prefix(prompt) {
        return rest.trim().trim_end_matches(crate::prompt::EOS).trim_end().to_string();
    }
    if raw.contains(INST_CLOSE) {
        if let Ok(report) = extract_response(raw) {
            return report.value;
        }
    }
    raw.to_string()
}
