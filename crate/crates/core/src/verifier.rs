//! Guideline post-pass: match the top of the differential against a
//! guideline corpus and raise urgency where a matched guideline asks for
//! more. Urgency is never lowered.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, Gateway, GatewayError, ModelSettings};
use crate::triage::{TriageAssessment, UrgencyStatus, MAX_DDX_CANDIDATES};

pub const GUIDELINE_VERIFIER_TAG: &str = "guideline_verifier";

pub const NEVER_DOWNGRADE_NOTE: &str = "Guidelines may raise urgency but never lower it.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineDocument {
    pub guideline_id: String,
    pub condition_name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    pub recommended_urgency: UrgencyStatus,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub source_citation: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading corpus {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing corpus: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("condition {0:?} appears more than once")]
    DuplicateCondition(String),
    #[error("guideline id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("guideline {0:?} has a blank condition name")]
    BlankCondition(String),
}

fn key(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<GuidelineDocument>,
}

impl Corpus {
    pub fn from_documents(documents: Vec<GuidelineDocument>) -> Result<Self, CorpusError> {
        let mut names = HashSet::new();
        let mut ids = HashSet::new();
        for d in &documents {
            if d.condition_name.trim().is_empty() {
                return Err(CorpusError::BlankCondition(d.guideline_id.clone()));
            }
            if !names.insert(key(&d.condition_name)) {
                return Err(CorpusError::DuplicateCondition(d.condition_name.clone()));
            }
            if !ids.insert(d.guideline_id.clone()) {
                return Err(CorpusError::DuplicateId(d.guideline_id.clone()));
            }
        }
        Ok(Self { documents })
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        Self::from_documents(serde_json::from_str(text)?)
    }

    pub fn documents(&self) -> &[GuidelineDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Looks a name up against condition names first, then synonyms.
    pub fn find(&self, name: &str) -> Option<&GuidelineDocument> {
        let k = key(name);
        self.documents
            .iter()
            .find(|d| key(&d.condition_name) == k)
            .or_else(|| self.documents.iter().find(|d| d.synonyms.iter().any(|s| key(s) == k)))
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineMatch {
    pub ddx_condition: String,
    pub guideline: GuidelineDocument,
    pub judge_rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchReport {
    pub matches: Vec<GuidelineMatch>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifierError {
    #[error("expected 1 to {MAX_DDX_CANDIDATES} conditions, got {0}")]
    ConditionCount(usize),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

const JUDGE_PROMPT: &str = "\
You decide whether a diagnosis refers to the same condition as one of the \
guideline topics listed, allowing for different wording and closely related \
names. Reply with exactly one topic name from the list on the first line, or \
`none` if no topic covers the diagnosis. You may add a one-line reason on the \
next line.";

fn topic_list(corpus: &Corpus) -> String {
    corpus
        .documents
        .iter()
        .map(|d| {
            if d.synonyms.is_empty() {
                format!("- {}", d.condition_name)
            } else {
                format!("- {} (also: {})", d.condition_name, d.synonyms.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn clean_answer(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['-', '*', ' '])
        .trim_matches(['"', '\'', '`', ' '])
        .trim_end_matches('.')
        .trim()
}

/// Asks the judge, once per condition, which corpus topic (if any) the
/// condition corresponds to.
pub fn match_guidelines(
    gateway: &Gateway,
    settings: &ModelSettings,
    conditions: &[String],
    corpus: &Corpus,
) -> Result<MatchReport, VerifierError> {
    if conditions.is_empty() || conditions.len() > MAX_DDX_CANDIDATES {
        return Err(VerifierError::ConditionCount(conditions.len()));
    }
    let mut report = MatchReport::default();
    if corpus.is_empty() {
        return Ok(report);
    }
    let topics = topic_list(corpus);
    for condition in conditions {
        let messages = vec![
            ChatMessage::system(JUDGE_PROMPT),
            ChatMessage::user(format!("Diagnosis: {condition}\n\nGuideline topics:\n{topics}")),
        ];
        let reply = gateway.complete_chat(&settings.request(GUIDELINE_VERIFIER_TAG, messages))?;
        let mut lines = reply.lines().map(str::trim).filter(|l| !l.is_empty());
        let answer = clean_answer(lines.next().unwrap_or(""));
        let rationale = lines.collect::<Vec<_>>().join(" ");
        if answer.is_empty() || answer.to_lowercase().starts_with("none") {
            continue;
        }
        match corpus.find(answer) {
            Some(doc) => report.matches.push(GuidelineMatch {
                ddx_condition: condition.clone(),
                guideline: doc.clone(),
                judge_rationale: rationale,
            }),
            None => report.warnings.push(format!(
                "judge named unknown guideline {answer:?} for {condition:?}; discarded"
            )),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierOutcome {
    pub original: UrgencyStatus,
    #[serde(rename = "final")]
    pub final_urgency: UrgencyStatus,
    pub matches: Vec<GuidelineMatch>,
    pub adjusted: bool,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Pure decision step: final urgency is the maximum of the original and
/// every matched guideline's recommendation.
pub fn apply_guidelines(original: UrgencyStatus, matches: &[GuidelineMatch]) -> VerifierOutcome {
    let top = matches
        .iter()
        .map(|m| m.guideline.recommended_urgency)
        .max();
    let final_urgency = top.map_or(original, |t| t.max(original));
    let explanation = match top {
        None => format!("No guideline matched the differential; urgency kept at {original}."),
        Some(_) if final_urgency > original => {
            // lowest id among the guidelines at the winning level, so the
            // choice does not depend on differential order
            let decider = matches
                .iter()
                .filter(|m| m.guideline.recommended_urgency == final_urgency)
                .min_by(|a, b| a.guideline.guideline_id.cmp(&b.guideline.guideline_id))
                .expect("winning level has a match");
            format!(
                "Raised from {original} to {final_urgency} per guideline {} ({}), matched to {:?}.",
                decider.guideline.guideline_id, decider.guideline.condition_name, decider.ddx_condition
            )
        }
        Some(t) => format!("Matched guidelines recommend at most {t}; urgency kept at {original}."),
    };
    VerifierOutcome {
        original,
        final_urgency,
        matches: matches.to_vec(),
        adjusted: final_urgency != original,
        explanation: format!("{explanation} {NEVER_DOWNGRADE_NOTE}"),
        warnings: Vec::new(),
    }
}

pub fn verify_urgency(
    gateway: &Gateway,
    settings: &ModelSettings,
    assessment: &TriageAssessment,
    corpus: &Corpus,
) -> Result<VerifierOutcome, VerifierError> {
    let top: Vec<String> = assessment.ddx.top(MAX_DDX_CANDIDATES).map(String::from).collect();
    let report = match_guidelines(gateway, settings, &top, corpus)?;
    let mut outcome = apply_guidelines(assessment.urgency, &report.matches);
    outcome.warnings = report.warnings;
    Ok(outcome)
}
