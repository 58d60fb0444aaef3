use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, Role};

const DEFAULT_LEXICON: &str = include_str!("../../data/jargon_lexicon.json");

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("reading lexicon {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing lexicon: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("lexicon has a blank term")]
    BlankTerm,
}

/// Professional terms a patient should not use, with lay substitutes.
#[derive(Debug, Clone)]
pub struct JargonLexicon {
    entries: Vec<(String, String, Regex)>,
}

impl JargonLexicon {
    pub fn new(terms: BTreeMap<String, String>) -> Result<Self, LexiconError> {
        let mut entries = Vec::with_capacity(terms.len());
        for (term, substitute) in terms {
            let term = term.trim().to_lowercase();
            if term.is_empty() {
                return Err(LexiconError::BlankTerm);
            }
            let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(&term))).expect("escaped term");
            entries.push((term, substitute, re));
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn substitute(&self, term: &str) -> Option<&str> {
        let term = term.to_lowercase();
        self.entries.iter().find(|(t, _, _)| *t == term).map(|(_, s, _)| s.as_str())
    }
}

impl Default for JargonLexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JargonFinding {
    /// Index into the simulator history.
    pub turn_index: usize,
    pub term: String,
    pub substitute: String,
    pub excerpt: String,
}

/// Flags lexicon terms in patient (assistant-role) turns.
pub fn lint_transcript(history: &[ChatMessage], lexicon: &JargonLexicon) -> Vec<JargonFinding> {
    let mut out = Vec::new();
    for (i, msg) in history.iter().enumerate() {
        if msg.role != Role::Assistant {
            continue;
        }
        for (term, substitute, re) in &lexicon.entries {
            if let Some(m) = re.find(&msg.content) {
                out.push(JargonFinding {
                    turn_index: i,
                    term: term.clone(),
                    substitute: substitute.clone(),
                    excerpt: m.as_str().to_string(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureFinding {
    pub turn_index: usize,
    pub kind: String,
    pub excerpt: String,
}

static SEVERITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b\d{1,2}\s*(?:/|out of)\s*10\b").unwrap());
static DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:for|since|past|last)\s+(?:the\s+)?(?:\d+|a|an|one|two|three|four|five|few|several|couple of)\s+(?:minutes?|hours?|days?|weeks?|months?|years?)\b",
    )
    .unwrap()
});

/// Heuristic only: severity scores or durations in the opening patient turn,
/// which the patient should offer only when asked.
pub fn over_disclosure_findings(history: &[ChatMessage]) -> Vec<DisclosureFinding> {
    let Some((i, opening)) = history.iter().enumerate().find(|(_, m)| m.role == Role::Assistant) else {
        return Vec::new();
    };
    [("severity", &*SEVERITY), ("duration", &*DURATION)]
        .into_iter()
        .filter_map(|(kind, re)| {
            re.find(&opening.content).map(|m| DisclosureFinding {
                turn_index: i,
                kind: kind.to_string(),
                excerpt: m.as_str().to_string(),
            })
        })
        .collect()
}
