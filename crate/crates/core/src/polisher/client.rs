//! Blocking client for OpenAI-style chat-completion endpoints, with bounded
//! retries, exponential backoff and a shared request-rate ceiling.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::PolishError;
use crate::error::{Error, Result};

pub const DEFAULT_API_KEY_ENV: &str = "COQ_FORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    /// Upper bound on response tokens (`max_tokens` on the wire).
    pub max_response_length: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// 0 disables the ceiling.
    pub requests_per_minute: f64,
    /// First retry delay; doubles on every further attempt.
    pub retry_backoff_ms: u64,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            temperature: 0.7,
            max_response_length: 1024,
            timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 4,
            requests_per_minute: 60.0,
            retry_backoff_ms: 500,
        }
    }
}

impl LlmClientConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: LlmClientConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.max_in_flight < 1 {
            return fail("max_in_flight must be at least 1");
        }
        if !(self.timeout_secs > 0.0) {
            return fail("timeout_secs must be positive");
        }
        if !(self.temperature >= 0.0) {
            return fail("temperature must be non-negative");
        }
        if !(self.requests_per_minute >= 0.0) {
            return fail("requests_per_minute must be non-negative");
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return fail("endpoint and model must be set");
        }
        Ok(())
    }

    /// Reads the API key from the configured environment variable.
    pub fn api_key_from_env(&self) -> Result<String, PolishError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(key),
            _ => Err(PolishError::MissingApiKey(self.api_key_env.clone())),
        }
    }
}

/// Capacity-one token bucket: request starts are spaced at least
/// `60 / requests_per_minute` seconds apart across all callers.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(rpm: f64) -> Self {
        let interval = (rpm > 0.0).then(|| Duration::from_secs_f64(60.0 / rpm));
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Sampling parameters sent with one request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: Option<f64>,
    pub max_tokens: u32,
}

pub struct ChatClient {
    config: LlmClientConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
    requests: AtomicU64,
}

enum Attempt {
    Retry(String),
    Stop(PolishError),
}

impl ChatClient {
    /// Builds a client using the key in the configured environment variable.
    pub fn from_env(config: LlmClientConfig) -> Result<Self, PolishError> {
        let key = config.api_key_from_env()?;
        Ok(Self::with_api_key(config, key))
    }

    pub fn with_api_key(config: LlmClientConfig, api_key: impl Into<String>) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        ChatClient {
            limiter: RateLimiter::per_minute(config.requests_per_minute),
            agent: ureq::Agent::new_with_config(agent_config),
            api_key: api_key.into(),
            config,
            requests: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    /// Network requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn default_sampling(&self) -> Sampling {
        Sampling {
            temperature: self.config.temperature,
            top_p: None,
            max_tokens: self.config.max_response_length,
        }
    }

    pub fn request_body(&self, prompt: &str, sampling: &Sampling) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": sampling.temperature,
            "max_tokens": sampling.max_tokens,
        });
        if let Some(top_p) = sampling.top_p {
            body["top_p"] = json!(top_p);
        }
        body
    }

    /// Sends one user message and returns the first choice's content, trimmed.
    ///
    /// Timeouts, connection failures and 5xx responses are retried up to
    /// `max_retries` times; other 4xx responses fail immediately as fatal.
    pub fn complete(&self, prompt: &str, sampling: &Sampling) -> Result<String, PolishError> {
        let body = self.request_body(prompt, sampling).to_string();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let factor = 1u64 << (attempt - 1).min(16);
                thread::sleep(Duration::from_millis(self.config.retry_backoff_ms * factor));
            }
            match self.attempt(&body) {
                Ok(text) if text.is_empty() => return Err(PolishError::Empty),
                Ok(text) => return Ok(text),
                Err(Attempt::Stop(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(PolishError::Transient {
            attempts: self.config.max_retries + 1,
            message: last,
        })
    }

    fn attempt(&self, body: &str) -> Result<String, Attempt> {
        self.limiter.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_)
                | ureq::Error::Io(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound
                | ureq::Error::Protocol(_) => Attempt::Retry(e.to_string()),
                other => Attempt::Stop(PolishError::Fatal(other.to_string())),
            })?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading response body: {e}")))?;
        match status {
            200..=299 => {}
            408 | 500..=599 => return Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => {
                return Err(Attempt::Stop(PolishError::Fatal(format!(
                    "HTTP {status}: {}",
                    text.chars().take(200).collect::<String>()
                ))))
            }
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Attempt::Retry(format!("invalid response JSON: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Attempt::Retry("response has no choices[0].message.content".into()))?;
        Ok(content.trim().to_string())
    }
}
