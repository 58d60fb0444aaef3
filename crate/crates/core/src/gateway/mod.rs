//! Provider-agnostic chat completion.
//!
//! Every agent in the system talks to a model through [`Gateway::complete_chat`].
//! The gateway validates the request, applies the retry policy to transport
//! failures, and appends one [`AuditRecord`] per invocation to a shared
//! [`AuditLog`]. Two backends ship: [`ScriptedBackend`] for deterministic runs
//! and [`RemoteHttpBackend`] for a chat-completion HTTP endpoint.

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

mod remote;
mod scripted;
mod template;

pub use remote::{RemoteConfig, RemoteHttpBackend};
pub use scripted::{ScriptEntry, ScriptMatcher, ScriptedBackend, LATEST_USER_PLACEHOLDER};
pub use template::{render_template, slot_names, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Assistant,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// One chat-completion call. `tag` identifies the calling agent and is what
/// scripted matchers and the audit log key on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub tag: String,
}

pub const DEFAULT_MODEL_ID: &str = "default";
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

impl ChatRequest {
    pub fn new(tag: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model_id: DEFAULT_MODEL_ID.to_string(),
            messages,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            tag: tag.into(),
        }
    }

    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f32) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_output_tokens(mut self, max_output_tokens: u32) -> Self {
        self.max_output_tokens = max_output_tokens;
        self
    }

    /// Content of the last `user` message, if any.
    pub fn latest_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |msg: String| Err(GatewayError::InvalidRequest(msg));
        if self.messages.is_empty() {
            return invalid("messages must not be empty".into());
        }
        if self.tag.trim().is_empty() {
            return invalid("tag must not be empty".into());
        }
        if self.model_id.trim().is_empty() {
            return invalid("model_id must not be empty".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return invalid(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return invalid("max_output_tokens must be positive".into());
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.trim().is_empty()) {
            return invalid(format!("message {i} has empty content"));
        }
        let first_system = self.messages.iter().position(|m| m.role == Role::System);
        let first_assistant = self.messages.iter().position(|m| m.role == Role::Assistant);
        if let Some(a) = first_assistant {
            match first_system {
                Some(s) if s < a => {}
                _ => return invalid("a system message must precede the first assistant message".into()),
            }
        }
        Ok(())
    }
}

/// Per-agent sampling settings. Temperature defaults to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL_ID.to_string(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

impl ModelSettings {
    pub fn request(&self, tag: impl Into<String>, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest::new(tag, messages)
            .with_model(self.model_id.clone())
            .with_temperature(self.temperature)
            .with_max_output_tokens(self.max_output_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp,
    Scripted,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::RemoteHttp => "remote_http",
            BackendKind::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no script entry matches tag `{tag}` at turn {turn}")]
    ScriptExhausted { tag: String, turn: usize },
}

pub trait ChatBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("gateway unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("script exhausted: no entry matches tag `{tag}` at turn {turn}")]
    ScriptExhausted { tag: String, turn: usize },
    #[error("model returned an empty completion for `{tag}`")]
    EmptyCompletion { tag: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn new(max_attempts: u32, backoff_base_ms: u64) -> Self {
        Self {
            max_attempts,
            backoff_base_ms,
        }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no delay before the first.
        if attempt <= 1 || self.backoff_base_ms == 0 {
            return Duration::ZERO;
        }
        let factor = 1u64 << (attempt - 2).min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum AuditOutcome {
    Ok,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: usize,
    pub tag: String,
    pub model_id: String,
    pub backend: BackendKind,
    pub attempts: u32,
    pub latency_ms: u64,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
    pub outcome: AuditOutcome,
}

/// Append-only call log, shareable across threads and gateways.
#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    records: Arc<Mutex<Vec<AuditRecord>>>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn append(&self, mut record: AuditRecord) {
        let mut records = self.records.lock().expect("audit log poisoned");
        record.seq = records.len();
        records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("audit log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<AuditRecord> {
        self.records.lock().expect("audit log poisoned").clone()
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    audit: AuditLog,
    retry: RetryPolicy,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Self::from_arc(Arc::new(backend))
    }

    pub fn from_arc(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            audit: AuditLog::new(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Route audit records into an existing (possibly shared) log.
    pub fn with_audit_log(mut self, audit: AuditLog) -> Self {
        self.audit = audit;
        self
    }

    pub fn audit_log(&self) -> &AuditLog {
        &self.audit
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    /// Completes `request` using the gateway's configured retry policy.
    pub fn complete_chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.with_retry(request, self.retry)
    }

    /// Completes `request`, retrying transport failures up to
    /// `policy.max_attempts` times. Script exhaustion and empty output are
    /// never retried.
    pub fn with_retry(&self, request: &ChatRequest, policy: RetryPolicy) -> Result<String, GatewayError> {
        let started = Instant::now();
        let mut attempts = 0;
        let mut tokens = (None, None);
        let result = self.attempt_all(request, policy, &mut attempts, &mut tokens);
        self.audit.append(AuditRecord {
            seq: 0,
            tag: request.tag.clone(),
            model_id: request.model_id.clone(),
            backend: self.backend.kind(),
            attempts,
            latency_ms: started.elapsed().as_millis() as u64,
            prompt_tokens: tokens.0,
            completion_tokens: tokens.1,
            outcome: match &result {
                Ok(_) => AuditOutcome::Ok,
                Err(e) => AuditOutcome::Error(e.to_string()),
            },
        });
        result
    }

    fn attempt_all(
        &self,
        request: &ChatRequest,
        policy: RetryPolicy,
        attempts: &mut u32,
        tokens: &mut (Option<u32>, Option<u32>),
    ) -> Result<String, GatewayError> {
        if policy.max_attempts == 0 {
            return Err(GatewayError::InvalidRequest("max_attempts must be at least 1".into()));
        }
        request.validate()?;
        let mut last_error = String::new();
        while *attempts < policy.max_attempts {
            *attempts += 1;
            let delay = policy.delay_before(*attempts);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            match self.backend.complete(request) {
                Ok(completion) => {
                    *tokens = (completion.prompt_tokens, completion.completion_tokens);
                    if completion.text.trim().is_empty() {
                        return Err(GatewayError::EmptyCompletion {
                            tag: request.tag.clone(),
                        });
                    }
                    return Ok(completion.text);
                }
                Err(BackendError::ScriptExhausted { tag, turn }) => {
                    return Err(GatewayError::ScriptExhausted { tag, turn });
                }
                Err(BackendError::Transport(e)) => {
                    tracing::warn!(tag = %request.tag, attempt = *attempts, error = %e, "transport failure");
                    last_error = e;
                }
            }
        }
        Err(GatewayError::Unavailable {
            attempts: *attempts,
            last_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures_before_success: u32,
        calls: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn kind(&self) -> BackendKind {
            BackendKind::RemoteHttp
        }

        fn complete(&self, _request: &ChatRequest) -> Result<Completion, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures_before_success {
                Err(BackendError::Transport("connection reset".into()))
            } else {
                Ok(Completion::text("ok"))
            }
        }
    }

    fn flaky(failures: u32) -> Gateway {
        Gateway::new(Flaky {
            failures_before_success: failures,
            calls: AtomicU32::new(0),
        })
    }

    fn request(tag: &str) -> ChatRequest {
        ChatRequest::new(tag, vec![ChatMessage::system("be brief"), ChatMessage::user("hello")])
    }

    #[test]
    fn scripted_first_match_by_tag() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::for_tag("summary", "wrong"),
            ScriptEntry::for_tag("symptom_collector", "Where does it hurt?"),
            ScriptEntry::for_tag("symptom_collector", "shadowed"),
        ]);
        let gw = Gateway::new(backend);
        assert_eq!(gw.complete_chat(&request("symptom_collector")).unwrap(), "Where does it hurt?");
    }

    #[test]
    fn empty_messages_is_precondition_violation() {
        let gw = Gateway::new(ScriptedBackend::new(vec![]));
        let err = gw.complete_chat(&ChatRequest::new("x", vec![])).unwrap_err();
        assert!(matches!(err, GatewayError::InvalidRequest(_)));
    }

    #[test]
    fn identical_requests_give_identical_bytes() {
        let gw = Gateway::new(ScriptedBackend::new(vec![ScriptEntry::for_tag("t", "same answer")]));
        let a = gw.complete_chat(&request("t")).unwrap();
        let b = gw.complete_chat(&request("t")).unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn retry_succeeds_on_second_attempt() {
        let gw = flaky(1);
        let out = gw.with_retry(&request("t"), RetryPolicy::new(3, 0)).unwrap();
        assert_eq!(out, "ok");
        assert_eq!(gw.audit_log().snapshot()[0].attempts, 2);
    }

    #[test]
    fn retry_gives_up_with_attempt_count() {
        let gw = flaky(u32::MAX);
        let err = gw.with_retry(&request("t"), RetryPolicy::new(2, 0)).unwrap_err();
        assert!(matches!(err, GatewayError::Unavailable { attempts: 2, .. }));
    }

    #[test]
    fn zero_attempts_rejected() {
        let gw = flaky(0);
        let err = gw.with_retry(&request("t"), RetryPolicy::new(0, 0)).unwrap_err();
        assert!(matches!(err, GatewayError::InvalidRequest(_)));
    }

    #[test]
    fn script_exhaustion_is_not_retried() {
        let gw = Gateway::new(ScriptedBackend::new(vec![])).with_retry_policy(RetryPolicy::new(5, 0));
        let err = gw.complete_chat(&request("t")).unwrap_err();
        assert_eq!(err, GatewayError::ScriptExhausted { tag: "t".into(), turn: 0 });
        assert_eq!(gw.audit_log().snapshot()[0].attempts, 1);
    }

    #[test]
    fn empty_output_is_an_error() {
        let gw = Gateway::new(ScriptedBackend::new(vec![ScriptEntry::for_tag("t", "   ")]));
        assert_eq!(
            gw.complete_chat(&request("t")).unwrap_err(),
            GatewayError::EmptyCompletion { tag: "t".into() }
        );
    }

    #[test]
    fn audit_log_counts_every_invocation() {
        let log = AuditLog::new();
        let gw = Gateway::new(ScriptedBackend::new(vec![ScriptEntry::for_tag("t", "x")])).with_audit_log(log.clone());
        gw.complete_chat(&request("t")).unwrap();
        gw.complete_chat(&request("missing")).unwrap_err();
        gw.complete_chat(&ChatRequest::new("t", vec![])).unwrap_err();
        assert_eq!(log.len(), 3);
        let seqs: Vec<_> = log.snapshot().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
    }

    #[test]
    fn request_validation_rules() {
        let ok = request("t");
        assert!(ok.validate().is_ok());
        let assistant_first = ChatRequest::new("t", vec![ChatMessage::assistant("hi"), ChatMessage::system("s")]);
        assert!(assistant_first.validate().is_err());
        let no_system = ChatRequest::new("t", vec![ChatMessage::user("q"), ChatMessage::assistant("a")]);
        assert!(no_system.validate().is_err());
        let user_only = ChatRequest::new("t", vec![ChatMessage::user("q")]);
        assert!(user_only.validate().is_ok());
        assert!(request("t").with_temperature(2.5).validate().is_err());
        assert!(request("t").with_max_output_tokens(0).validate().is_err());
        let blank = ChatRequest::new("t", vec![ChatMessage::user(" ")]);
        assert!(blank.validate().is_err());
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::new(4, 100);
        assert_eq!(p.delay_before(1), Duration::ZERO);
        assert_eq!(p.delay_before(2), Duration::from_millis(100));
        assert_eq!(p.delay_before(3), Duration::from_millis(200));
        assert_eq!(p.delay_before(4), Duration::from_millis(400));
    }
}
