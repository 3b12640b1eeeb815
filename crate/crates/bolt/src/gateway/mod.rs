//! Uniform chat-completion access: an HTTP client for OpenAI-style endpoints
//! and a deterministic scripted mock, behind one `ChatBackend` trait with a
//! name-keyed registry. The gateway layers retries, a per-backend token-bucket
//! rate limit, and a content-addressed response cache on top, so a warm-cache
//! run replays byte-identically with zero backend calls.

mod backends;
mod cache;
mod limiter;

pub use backends::{
    build_backend, register_backend, registered_kinds, BackendError, ChatBackend,
    ScriptedMockBackend,
};
pub use cache::ResponseCache;
pub use limiter::{Clock, Limiter, SystemClock};

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationParams {
    /// Defaults used for conversation simulation (sampling diversity).
    pub fn simulation() -> Self {
        GenerationParams {
            temperature: 0.7,
            max_tokens: 1024,
            stop: None,
            seed: None,
        }
    }

    /// Defaults used for behavior classification (label stability).
    pub fn classification() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_tokens: 256,
            stop: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Precondition(format!(
                "temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Declarative backend descriptor; `kind` selects the implementation from
/// the backend registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    pub kind: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_rate_per_minute")]
    pub rate_per_minute: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_max_parallel() -> usize {
    4
}
fn default_rate_per_minute() -> u32 {
    60
}
fn default_max_retries() -> u32 {
    3
}

impl BackendConfig {
    pub fn scripted_mock(name: &str, model_id: &str, script_path: impl Into<PathBuf>) -> Self {
        BackendConfig {
            name: name.to_string(),
            kind: "scripted_mock".to_string(),
            model_id: model_id.to_string(),
            base_url: None,
            api_key_env: None,
            script_path: Some(script_path.into()),
            max_parallel: default_max_parallel(),
            rate_per_minute: 100_000,
            max_retries: default_max_retries(),
        }
    }

    /// Kind-specific fields must be present exactly for their kind.
    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 || self.rate_per_minute == 0 {
            return Err(Error::Config(format!(
                "backend `{}`: max_parallel and rate_per_minute must be positive",
                self.name
            )));
        }
        match self.kind.as_str() {
            "http_chat" => {
                if self.base_url.is_none() || self.api_key_env.is_none() {
                    return Err(Error::Config(format!(
                        "backend `{}`: http_chat requires base_url and api_key_env",
                        self.name
                    )));
                }
                if self.script_path.is_some() {
                    return Err(Error::Config(format!(
                        "backend `{}`: script_path is only valid for scripted_mock",
                        self.name
                    )));
                }
            }
            "scripted_mock" => {
                if self.script_path.is_none() {
                    return Err(Error::Config(format!(
                        "backend `{}`: scripted_mock requires script_path",
                        self.name
                    )));
                }
                if self.base_url.is_some() || self.api_key_env.is_some() {
                    return Err(Error::Config(format!(
                        "backend `{}`: base_url/api_key_env are only valid for http_chat",
                        self.name
                    )));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "backend `{}`: unknown kind `{other}` (registered: {})",
                    self.name,
                    registered_kinds().join(", ")
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    backend: &'a str,
    model: &'a str,
    messages: &'a [ChatMessage],
    params: &'a GenerationParams,
}

/// SHA-256 over a canonical serialization (fixed field order, UTF-8, no
/// insignificant whitespace). Identical logical requests map to identical
/// keys across processes and platforms.
pub fn request_key(
    backend_name: &str,
    model_id: &str,
    messages: &[ChatMessage],
    params: &GenerationParams,
) -> String {
    let canonical = serde_json::to_string(&CanonicalRequest {
        backend: backend_name,
        model: model_id,
        messages,
        params,
    })
    .expect("canonical request serialization cannot fail");
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(digest)
}

#[derive(Debug, Default)]
struct Counters {
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    retries: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayStats {
    /// Completed calls that actually reached the backend (network or mock).
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
}

/// A configured backend with caching, rate limiting, and retry handling.
pub struct Gateway {
    config: BackendConfig,
    backend: Box<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    limiter: Limiter,
    clock: Arc<dyn Clock>,
    counters: Counters,
}

impl Gateway {
    pub fn new(config: BackendConfig, cache_dir: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let backend = build_backend(&config)?;
        Self::with_backend(config, backend, cache_dir, Arc::new(SystemClock))
    }

    pub fn with_backend(
        config: BackendConfig,
        backend: Box<dyn ChatBackend>,
        cache_dir: Option<PathBuf>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let cache = match cache_dir {
            Some(dir) => Some(ResponseCache::open(dir)?),
            None => None,
        };
        let limiter = Limiter::new(
            config.max_parallel,
            config.rate_per_minute,
            Arc::clone(&clock),
        );
        Ok(Gateway {
            config,
            backend,
            cache,
            limiter,
            clock,
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            backend_calls: self.counters.backend_calls.load(Ordering::SeqCst),
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
            retries: self.counters.retries.load(Ordering::SeqCst),
        }
    }

    /// Return the first choice's text. Cache hits return without touching
    /// the backend; misses call the backend and persist the response
    /// atomically before returning.
    pub fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String> {
        params.validate()?;
        if messages.is_empty() {
            return Err(Error::Precondition("messages must be non-empty".into()));
        }
        let key = request_key(&self.config.name, &self.config.model_id, messages, params);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&key) {
                self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(text);
            }
        }
        let text = self.call_with_retries(messages, params)?;
        if let Some(cache) = &self.cache {
            let request = serde_json::to_value(CanonicalRequest {
                backend: &self.config.name,
                model: &self.config.model_id,
                messages,
                params,
            })?;
            cache.put(&key, &request, &text, &self.config.name)?;
        }
        Ok(text)
    }

    fn call_with_retries(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<String> {
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let _slot = self.limiter.acquire();
            self.counters.backend_calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete_raw(messages, params) {
                Ok(text) => return Ok(text),
                Err(BackendError::Retryable(msg)) if attempt < max_attempts => {
                    self.counters.retries.fetch_add(1, Ordering::SeqCst);
                    drop(_slot);
                    self.clock.sleep_millis(backoff_millis(attempt));
                    let _ = msg;
                }
                Err(BackendError::Retryable(msg)) => {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message: msg,
                    })
                }
                Err(BackendError::Auth(msg)) => return Err(Error::Auth(msg)),
                Err(BackendError::Malformed(msg)) => return Err(Error::MalformedResponse(msg)),
                Err(BackendError::MockMiss(key)) => return Err(Error::MockMiss(key)),
            }
        }
    }
}

/// Exponential backoff with jitter, capped at 30s.
fn backoff_millis(attempt: u32) -> u64 {
    use rand::Rng;
    let base = 200u64.saturating_mul(1 << attempt.min(8));
    let jitter = rand::thread_rng().gen_range(0..base / 2 + 1);
    (base + jitter).min(30_000)
}
