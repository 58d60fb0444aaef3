//! The simulated patient: answers the triage agent from one vignette,
//! in lay language, and never contradicts facts it has already stated.

mod lint;

use serde::{Deserialize, Serialize};

use crate::gateway::{render_template, ChatMessage, Gateway, GatewayError, ModelSettings, Role};
use crate::vignette::PatientVignette;

pub use lint::{lint_transcript, over_disclosure_findings, DisclosureFinding, JargonFinding, JargonLexicon, LexiconError};

pub const PATIENT_SIMULATOR_TAG: &str = "patient_simulator";

pub const PATIENT_PROMPT_TEMPLATE: &str = include_str!("patient_prompt.txt");

/// Numbered behavior headings the rendered prompt must keep.
pub const BEHAVIOR_SECTIONS: [&str; 6] = [
    "1. Basic Knowledge & Communication Style:",
    "2. Avoid Professional Jargon:",
    "3. Details Only When Asked:",
    "4. Common Sense Responses:",
    "5. Stay in Character:",
    "6. Parent/Guardian Role:",
];

/// Sent (but not kept in history) to elicit the opening complaint.
pub const OPENING_CUE: &str = "The physician greets you and asks what brings you in today.";

pub const LEDGER_PREAMBLE: &str = "Facts you have already stated (stay consistent with them):";

pub fn render_simulator_prompt(vignette: &PatientVignette) -> String {
    render_template(PATIENT_PROMPT_TEMPLATE, &[("patient vignette", vignette.narrative.as_str())])
        .expect("patient prompt has a single vignette slot")
}

const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "any", "anything", "are", "at", "be", "been", "can", "could", "did", "do",
    "does", "for", "have", "has", "had", "how", "i", "if", "in", "is", "it", "its", "me", "my", "of", "on", "or",
    "please", "so", "tell", "that", "the", "there", "this", "to", "was", "were", "what", "would", "you", "your",
    "youve", "ive",
];

/// Lowercased content words of a question, punctuation and stopwords dropped.
pub fn question_gist(question: &str) -> String {
    question
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub gist: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimulatorError {
    #[error("conversation already opened")]
    AlreadyOpened,
    #[error("conversation has not been opened")]
    NotOpened,
    #[error("physician message is empty")]
    EmptyPhysicianMessage,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// History is from the patient's side: the physician speaks as `user`, the
/// patient as `assistant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorSession {
    pub vignette: PatientVignette,
    pub history: Vec<ChatMessage>,
    pub inference_ledger: Vec<LedgerEntry>,
    #[serde(default)]
    pub settings: ModelSettings,
}

impl SimulatorSession {
    pub fn new(vignette: PatientVignette) -> Self {
        Self::with_settings(vignette, ModelSettings::default())
    }

    pub fn with_settings(vignette: PatientVignette, settings: ModelSettings) -> Self {
        let prompt = render_simulator_prompt(&vignette);
        Self {
            vignette,
            history: vec![ChatMessage::system(prompt)],
            inference_ledger: Vec::new(),
            settings,
        }
    }

    pub fn is_opened(&self) -> bool {
        self.history.len() > 1
    }

    fn request_messages(&self, next_user: &str) -> Vec<ChatMessage> {
        let mut messages = Vec::with_capacity(self.history.len() + 2);
        messages.push(self.history[0].clone());
        if !self.inference_ledger.is_empty() {
            let facts: Vec<String> = self
                .inference_ledger
                .iter()
                .map(|e| format!("- Asked \"{}\": you said \"{}\"", e.question, e.answer))
                .collect();
            messages.push(ChatMessage::system(format!("{LEDGER_PREAMBLE}\n{}", facts.join("\n"))));
        }
        messages.extend(self.history[1..].iter().cloned());
        messages.push(ChatMessage::user(next_user));
        messages
    }

    /// The patient's first statement of their main concern.
    pub fn open_conversation(&mut self, gateway: &Gateway) -> Result<String, SimulatorError> {
        if self.is_opened() {
            return Err(SimulatorError::AlreadyOpened);
        }
        let request = self.settings.request(PATIENT_SIMULATOR_TAG, self.request_messages(OPENING_CUE));
        let opening = gateway.complete_chat(&request)?;
        self.history.push(ChatMessage::assistant(opening.clone()));
        Ok(opening)
    }

    /// Answers one physician message. A question whose gist was already
    /// answered is replayed from the ledger without a model call.
    pub fn respond(&mut self, gateway: &Gateway, physician_message: &str) -> Result<String, SimulatorError> {
        if !self.is_opened() {
            return Err(SimulatorError::NotOpened);
        }
        if physician_message.trim().is_empty() {
            return Err(SimulatorError::EmptyPhysicianMessage);
        }
        let gist = question_gist(physician_message);
        let replay = (!gist.is_empty())
            .then(|| self.inference_ledger.iter().find(|e| e.gist == gist))
            .flatten()
            .map(|e| e.answer.clone());
        let answer = match replay {
            Some(answer) => answer,
            None => {
                let request = self
                    .settings
                    .request(PATIENT_SIMULATOR_TAG, self.request_messages(physician_message));
                let answer = gateway.complete_chat(&request)?;
                if !gist.is_empty() {
                    self.inference_ledger.push(LedgerEntry {
                        gist,
                        question: physician_message.to_string(),
                        answer: answer.clone(),
                    });
                }
                answer
            }
        };
        self.history.push(ChatMessage::user(physician_message));
        self.history.push(ChatMessage::assistant(answer.clone()));
        Ok(answer)
    }

    /// Patient turns only, in order.
    pub fn patient_turns(&self) -> impl Iterator<Item = &str> {
        self.history
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }
}
