//! OpenAI-compatible chat-completions backend.

use std::io::ErrorKind;
use std::time::Duration;

use fastslow_core::slow::{BackendError, LlmBackend, Prompt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const ENV_BASE_URL: &str = "FASTSLOW_LLM_BASE_URL";
pub const ENV_MODEL: &str = "FASTSLOW_LLM_MODEL";
pub const ENV_API_KEY: &str = "FASTSLOW_LLM_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: DEFAULT_BASE_URL.into(),
            model: DEFAULT_MODEL.into(),
            api_key_env: ENV_API_KEY.into(),
            timeout_secs: 10.0,
        }
    }
}

impl RemoteConfig {
    /// Defaults overridden by `FASTSLOW_LLM_BASE_URL` and `FASTSLOW_LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut c = RemoteConfig::default();
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            c.base_url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            c.model = model;
        }
        c
    }
}

pub struct RemoteBackend {
    pub config: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(config.timeout_secs)).build();
        RemoteBackend { config, agent, api_key }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Request body for `prompt`.
    pub fn body(&self, prompt: &Prompt) -> Value {
        let full = prompt.render();
        let user = full.strip_prefix(prompt.system.as_str()).unwrap_or(&full).trim_start();
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": user},
            ],
        })
    }
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            return matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock);
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

/// `choices[0].message.content` of a chat-completions response.
pub fn response_text(body: &Value) -> Result<String, BackendError> {
    match body.pointer("/choices/0/message/content").and_then(Value::as_str) {
        Some(s) if !s.trim().is_empty() => Ok(s.to_string()),
        _ => Err(BackendError::EmptyResponse),
    }
}

impl LlmBackend for RemoteBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint()).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(self.body(prompt)) {
            Ok(resp) => {
                let body: Value =
                    resp.into_json().map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
                response_text(&body)
            }
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(BackendError::Transport(format!("http {code}: {}", text.chars().take(200).collect::<String>())))
            }
            Err(ureq::Error::Transport(t)) if is_timeout(&t) => Err(BackendError::Timeout),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }
}
