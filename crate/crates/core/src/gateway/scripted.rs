use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, ChatBackend, ChatRequest, Completion};

/// Replaced in a scripted response by the request's latest user message.
pub const LATEST_USER_PLACEHOLDER: &str = "{{latest_user}}";

/// Predicate over a request. Absent fields match anything.
///
/// `turn` is the zero-based ordinal of the call among all calls this backend
/// has received with the same tag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptMatcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<usize>,
}

impl ScriptMatcher {
    fn matches(&self, request: &ChatRequest, turn: usize) -> bool {
        if let Some(tag) = &self.tag {
            if *tag != request.tag {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            if !request.latest_user().is_some_and(|u| u.contains(needle.as_str())) {
                return false;
            }
        }
        self.turn.is_none_or(|t| t == turn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default)]
    pub matcher: ScriptMatcher,
    pub response: String,
}

impl ScriptEntry {
    pub fn for_tag(tag: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: ScriptMatcher {
                tag: Some(tag.into()),
                ..Default::default()
            },
            response: response.into(),
        }
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.matcher.contains = Some(needle.into());
        self
    }

    pub fn at_turn(mut self, turn: usize) -> Self {
        self.matcher.turn = Some(turn);
        self
    }
}

/// Deterministic backend: the first entry whose matcher accepts the request
/// wins. Never touches the network.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    turns: Mutex<HashMap<String, usize>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            turns: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(json)?))
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }
}

impl ChatBackend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let turn = {
            let mut turns = self.turns.lock().expect("script turn counter poisoned");
            let slot = turns.entry(request.tag.clone()).or_insert(0);
            let t = *slot;
            *slot += 1;
            t
        };
        let entry = self
            .entries
            .iter()
            .find(|e| e.matcher.matches(request, turn))
            .ok_or_else(|| BackendError::ScriptExhausted {
                tag: request.tag.clone(),
                turn,
            })?;
        let text = if entry.response.contains(LATEST_USER_PLACEHOLDER) {
            entry
                .response
                .replace(LATEST_USER_PLACEHOLDER, request.latest_user().unwrap_or_default())
        } else {
            entry.response.clone()
        };
        Ok(Completion::text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    fn req(tag: &str, user: &str) -> ChatRequest {
        ChatRequest::new(tag, vec![ChatMessage::system("s"), ChatMessage::user(user)])
    }

    #[test]
    fn turn_and_substring_matchers() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::for_tag("a", "first").at_turn(0),
            ScriptEntry::for_tag("a", "scans").containing("scans"),
            ScriptEntry::for_tag("a", "fallback"),
        ]);
        assert_eq!(backend.complete(&req("a", "scans?")).unwrap().text, "first");
        assert_eq!(backend.complete(&req("a", "any scans?")).unwrap().text, "scans");
        assert_eq!(backend.complete(&req("a", "other")).unwrap().text, "fallback");
        // other tags keep their own ordinal
        assert!(matches!(
            backend.complete(&req("b", "x")),
            Err(BackendError::ScriptExhausted { turn: 0, .. })
        ));
    }

    #[test]
    fn echo_placeholder() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::for_tag("primary", LATEST_USER_PLACEHOLDER)]);
        assert_eq!(backend.complete(&req("primary", "How long?")).unwrap().text, "How long?");
    }

    #[test]
    fn script_file_format() {
        let json = r#"[
            {"matcher": {"tag": "summary", "turn": 0}, "response": "a"},
            {"response": "catch-all"}
        ]"#;
        let backend = ScriptedBackend::from_json(json).unwrap();
        assert_eq!(backend.entries().len(), 2);
        assert_eq!(backend.complete(&req("other", "q")).unwrap().text, "catch-all");
        assert!(ScriptedBackend::from_json(r#"[{"matcher": {"bogus": 1}, "response": "x"}]"#).is_err());
    }
}
