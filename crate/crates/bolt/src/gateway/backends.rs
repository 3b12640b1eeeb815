//! Backend implementations and their registry. Each backend kind registers a
//! constructor under a string name; configs select one at runtime by `kind`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use once_cell::sync::Lazy;
use serde::Deserialize;

use super::{request_key, BackendConfig, ChatMessage, GenerationParams};
use crate::{Error, Result};

#[derive(Debug)]
pub enum BackendError {
    /// Transient transport/server failure (timeouts, 429, 5xx): retried.
    Retryable(String),
    /// Missing or rejected credentials: never retried.
    Auth(String),
    /// Response arrived but did not have the expected shape.
    Malformed(String),
    /// Scripted mock had no response for the request key.
    MockMiss(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete_raw(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> std::result::Result<String, BackendError>;
}

type BackendCtor = fn(&BackendConfig) -> Result<Box<dyn ChatBackend>>;

static REGISTRY: Lazy<Mutex<BTreeMap<&'static str, BackendCtor>>> = Lazy::new(|| {
    let mut m: BTreeMap<&'static str, BackendCtor> = BTreeMap::new();
    m.insert("http_chat", |cfg| Ok(Box::new(HttpChatBackend::new(cfg)?)));
    m.insert("scripted_mock", |cfg| {
        Ok(Box::new(ScriptedMockBackend::from_config(cfg)?))
    });
    Mutex::new(m)
});

/// Add (or replace) a backend kind. Intended for embedding callers that
/// bring their own transport.
pub fn register_backend(kind: &'static str, ctor: BackendCtor) {
    REGISTRY.lock().unwrap().insert(kind, ctor);
}

pub fn registered_kinds() -> Vec<&'static str> {
    REGISTRY.lock().unwrap().keys().copied().collect()
}

pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn ChatBackend>> {
    let ctor = REGISTRY.lock().unwrap().get(config.kind.as_str()).copied();
    let ctor = ctor.ok_or_else(|| {
        Error::Config(format!(
            "unknown backend kind `{}` (registered: {})",
            config.kind,
            registered_kinds().join(", ")
        ))
    })?;
    ctor(config)
}

/// OpenAI-style `/chat/completions` over HTTP with bearer auth. The API key
/// is read from the configured environment variable at call time.
pub struct HttpChatBackend {
    endpoint: String,
    model_id: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        config.validate()?;
        let base = config
            .base_url
            .as_deref()
            .ok_or_else(|| Error::Config("http_chat requires base_url".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client init: {e}")))?;
        Ok(HttpChatBackend {
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model_id: config.model_id.clone(),
            api_key_env: config
                .api_key_env
                .clone()
                .ok_or_else(|| Error::Config("http_chat requires api_key_env".into()))?,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl ChatBackend for HttpChatBackend {
    fn complete_raw(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> std::result::Result<String, BackendError> {
        let api_key = std::env::var(&self.api_key_env).map_err(|_| {
            BackendError::Auth(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))
        })?;
        let mut body = serde_json::json!({
            "model": self.model_id,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(stop) = &params.stop {
            body["stop"] = serde_json::json!(stop);
        }
        if let Some(seed) = params.seed {
            body["seed"] = serde_json::json!(seed);
        }
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Retryable(format!("request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("HTTP {status}")));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Malformed(format!("HTTP {status}")));
        }
        let parsed: ChatCompletionResponse = response
            .json()
            .map_err(|e| BackendError::Malformed(format!("invalid response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("response has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MockScript {
    /// request_key -> response text, for exact replay.
    #[serde(default)]
    responses: BTreeMap<String, String>,
    /// Consumed in order when no keyed response matches.
    #[serde(default)]
    fallback: Vec<String>,
    /// Last resort for any request; omit to make unmatched requests an error.
    #[serde(default)]
    default: Option<String>,
}

/// Deterministic offline backend driven by a JSON script file.
pub struct ScriptedMockBackend {
    backend_name: String,
    model_id: String,
    script: MockScript,
    fallback_cursor: Mutex<usize>,
}

impl ScriptedMockBackend {
    pub fn from_config(config: &BackendConfig) -> Result<Self> {
        config.validate()?;
        let path = config
            .script_path
            .as_deref()
            .ok_or_else(|| Error::Config("scripted_mock requires script_path".into()))?;
        Self::load(&config.name, &config.model_id, path)
    }

    pub fn load(backend_name: &str, model_id: &str, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        let script: MockScript = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("invalid mock script {}: {e}", path.display()))
        })?;
        Ok(ScriptedMockBackend {
            backend_name: backend_name.to_string(),
            model_id: model_id.to_string(),
            script,
            fallback_cursor: Mutex::new(0),
        })
    }

    pub fn from_map(backend_name: &str, model_id: &str, responses: BTreeMap<String, String>) -> Self {
        Self::from_parts(backend_name, model_id, responses, Vec::new(), None)
    }

    pub fn from_parts(
        backend_name: &str,
        model_id: &str,
        responses: BTreeMap<String, String>,
        fallback: Vec<String>,
        default: Option<String>,
    ) -> Self {
        ScriptedMockBackend {
            backend_name: backend_name.to_string(),
            model_id: model_id.to_string(),
            script: MockScript {
                responses,
                fallback,
                default,
            },
            fallback_cursor: Mutex::new(0),
        }
    }
}

impl ChatBackend for ScriptedMockBackend {
    fn complete_raw(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
    ) -> std::result::Result<String, BackendError> {
        let key = request_key(&self.backend_name, &self.model_id, messages, params);
        if let Some(text) = self.script.responses.get(&key) {
            return Ok(text.clone());
        }
        {
            let mut cursor = self.fallback_cursor.lock().unwrap();
            if *cursor < self.script.fallback.len() {
                let text = self.script.fallback[*cursor].clone();
                *cursor += 1;
                return Ok(text);
            }
        }
        if let Some(text) = &self.script.default {
            return Ok(text.clone());
        }
        Err(BackendError::MockMiss(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::user("hello")]
    }

    #[test]
    fn mock_keyed_response_wins_over_fallback() {
        let params = GenerationParams::classification();
        let key = request_key("m", "model-x", &msgs(), &params);
        let mut responses = BTreeMap::new();
        responses.insert(key, "keyed".to_string());
        let mut backend = ScriptedMockBackend::from_map("m", "model-x", responses);
        backend.script.fallback = vec!["fb".into()];
        assert_eq!(backend.complete_raw(&msgs(), &params).unwrap(), "keyed");
    }

    #[test]
    fn mock_fallback_consumed_in_order_then_default() {
        let params = GenerationParams::classification();
        let mut backend = ScriptedMockBackend::from_map("m", "x", BTreeMap::new());
        backend.script.fallback = vec!["one".into(), "two".into()];
        backend.script.default = Some("dflt".into());
        assert_eq!(backend.complete_raw(&msgs(), &params).unwrap(), "one");
        assert_eq!(backend.complete_raw(&msgs(), &params).unwrap(), "two");
        assert_eq!(backend.complete_raw(&msgs(), &params).unwrap(), "dflt");
    }

    #[test]
    fn mock_miss_reports_the_key() {
        let params = GenerationParams::classification();
        let backend = ScriptedMockBackend::from_map("m", "x", BTreeMap::new());
        match backend.complete_raw(&msgs(), &params) {
            Err(BackendError::MockMiss(key)) => {
                assert_eq!(key, request_key("m", "x", &msgs(), &params));
            }
            other => panic!("expected MockMiss, got {other:?}"),
        }
    }

    #[test]
    fn mock_script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        fs::write(
            &path,
            r#"{"responses": {}, "fallback": ["a"], "default": "d"}"#,
        )
        .unwrap();
        let backend = ScriptedMockBackend::load("m", "x", &path).unwrap();
        let params = GenerationParams::simulation();
        assert_eq!(backend.complete_raw(&msgs(), &params).unwrap(), "a");
        assert_eq!(backend.complete_raw(&msgs(), &params).unwrap(), "d");
    }

    #[test]
    fn registry_knows_builtin_kinds() {
        let kinds = registered_kinds();
        assert!(kinds.contains(&"http_chat"));
        assert!(kinds.contains(&"scripted_mock"));
    }

    #[test]
    fn build_backend_rejects_unknown_kind() {
        let cfg = BackendConfig {
            name: "x".into(),
            kind: "telepathy".into(),
            model_id: "m".into(),
            base_url: None,
            api_key_env: None,
            script_path: None,
            max_parallel: 1,
            rate_per_minute: 1,
            max_retries: 0,
        };
        assert!(build_backend(&cfg).is_err());
    }
}
