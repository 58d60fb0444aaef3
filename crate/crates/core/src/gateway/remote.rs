use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, BackendKind, ChatBackend, ChatRequest, Completion};

/// Connection settings for an OpenAI-style `/chat/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Forwarded as the `seed` field when present.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_timeout_secs() -> u64 {
    60
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            token_env: None,
            timeout_secs: default_timeout_secs(),
            seed: None,
        }
    }
}

pub struct RemoteHttpBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteHttpBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

pub(crate) fn parse_completion(body: &Value) -> Result<Completion, BackendError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))?;
    let tokens = |key: &str| {
        body.pointer(&format!("/usage/{key}"))
            .and_then(Value::as_u64)
            .map(|v| v as u32)
    };
    Ok(Completion {
        text: text.to_string(),
        prompt_tokens: tokens("prompt_tokens"),
        completion_tokens: tokens("completion_tokens"),
    })
}

impl ChatBackend for RemoteHttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::RemoteHttp
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let mut call = self.agent.post(&self.endpoint()).header("content-type", "application/json");
        if let Some(var) = &self.config.token_env {
            let token = std::env::var(var)
                .map_err(|_| BackendError::Transport(format!("environment variable {var} is not set")))?;
            call = call.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = call
            .send_json(self.body(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("malformed response body: {e}")))?;
        parse_completion(&body)
    }
}
