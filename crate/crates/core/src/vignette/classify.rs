use std::fmt;

use serde::{Deserialize, Serialize};

use super::EncounterRecord;
use crate::gateway::{ChatMessage, Gateway, GatewayError, ModelSettings};

pub const ENCOUNTER_CLASSIFIER_TAG: &str = "encounter_classifier";
pub const SYMPTOM_CLASSIFIER_TAG: &str = "symptom_classifier";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EncounterCategory {
    InitialEncounter,
    FollowUpVisit,
    RoutineCheckup,
    Unknown,
}

impl EncounterCategory {
    pub const ALL: [EncounterCategory; 4] = [
        EncounterCategory::InitialEncounter,
        EncounterCategory::FollowUpVisit,
        EncounterCategory::RoutineCheckup,
        EncounterCategory::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EncounterCategory::InitialEncounter => "Initial Encounter",
            EncounterCategory::FollowUpVisit => "Follow-Up Visit",
            EncounterCategory::RoutineCheckup => "Routine Checkup",
            EncounterCategory::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymptomCategory {
    PainRelated,
    Respiratory,
    Neurological,
    Gastrointestinal,
    Dermatological,
    Cardiovascular,
    Genitourinary,
    Musculoskeletal,
    Constitutional,
    Psychological,
}

impl SymptomCategory {
    pub const ALL: [SymptomCategory; 10] = [
        SymptomCategory::PainRelated,
        SymptomCategory::Respiratory,
        SymptomCategory::Neurological,
        SymptomCategory::Gastrointestinal,
        SymptomCategory::Dermatological,
        SymptomCategory::Cardiovascular,
        SymptomCategory::Genitourinary,
        SymptomCategory::Musculoskeletal,
        SymptomCategory::Constitutional,
        SymptomCategory::Psychological,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SymptomCategory::PainRelated => "Pain-Related",
            SymptomCategory::Respiratory => "Respiratory",
            SymptomCategory::Neurological => "Neurological",
            SymptomCategory::Gastrointestinal => "Gastrointestinal",
            SymptomCategory::Dermatological => "Dermatological",
            SymptomCategory::Cardiovascular => "Cardiovascular",
            SymptomCategory::Genitourinary => "Genitourinary",
            SymptomCategory::Musculoskeletal => "Musculoskeletal",
            SymptomCategory::Constitutional => "Constitutional",
            SymptomCategory::Psychological => "Psychological",
        }
    }

    /// Categories retained for triage; mental-health presentations are excluded.
    pub fn is_triage_eligible(self) -> bool {
        self != SymptomCategory::Psychological
    }
}

impl fmt::Display for SymptomCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl fmt::Display for EncounterCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifyError {
    #[error("symptom classification failed for {record_id}: unparseable answer {answer:?}")]
    ClassificationFailed { record_id: String, answer: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

const ENCOUNTER_INSTRUCTIONS: &str = "\
You classify outpatient encounter records by visit type. Choose exactly one category:
- Initial Encounter: a first visit for symptoms or a health concern that leads to a new diagnosis or care plan.
- Follow-Up Visit: a subsequent visit to monitor progress, evaluate treatment, or check for complications.
- Routine Checkup: preventive care, health maintenance, or chronic condition monitoring, often without symptoms.
- Unknown: the record lacks sufficient information to classify.
Reply with the category name only.";

const SYMPTOM_INSTRUCTIONS: &str = "\
You classify the presenting problem of an initial clinical encounter, using the chief complaint and \
history of present illness. Choose exactly one category, even when several seem plausible:
Pain-Related, Respiratory, Neurological, Gastrointestinal, Dermatological, Cardiovascular, \
Genitourinary, Musculoskeletal, Constitutional, Psychological.
Constitutional covers nonspecific systemic symptoms such as fever or chills that do not localize to \
one organ system.
Reply with the category name only.";

fn record_prompt(record: &EncounterRecord) -> String {
    format!(
        "Chief complaint: {}\nHistory of present illness: {}",
        record.chief_complaint.trim(),
        record.history_of_present_illness.trim()
    )
}

/// Lowercased ASCII alphanumerics only, so "Follow-up visit" and
/// "FollowUpVisit" compare equal.
fn squash(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Picks the single category whose key appears in `answer`; ambiguous or
/// empty answers give `None`.
fn unique_match<T: Copy + PartialEq>(answer: &str, keys: &[(&str, T)]) -> Option<T> {
    let squashed = squash(answer);
    let mut found: Option<T> = None;
    for (key, value) in keys {
        if squashed.contains(key) {
            match found {
                Some(f) if f != *value => return None,
                _ => found = Some(*value),
            }
        }
    }
    found
}

pub fn parse_encounter_category(answer: &str) -> EncounterCategory {
    use EncounterCategory::*;
    unique_match(
        answer,
        &[
            ("initialencounter", InitialEncounter),
            ("initialvisit", InitialEncounter),
            ("followupvisit", FollowUpVisit),
            ("followup", FollowUpVisit),
            ("routinecheckup", RoutineCheckup),
            ("routingcheckup", RoutineCheckup),
            ("unknown", Unknown),
        ],
    )
    .unwrap_or(Unknown)
}

pub fn parse_symptom_category(answer: &str) -> Option<SymptomCategory> {
    let keys: Vec<(String, SymptomCategory)> = SymptomCategory::ALL
        .iter()
        .map(|c| (squash(c.label()), *c))
        .collect();
    let keys: Vec<(&str, SymptomCategory)> = keys.iter().map(|(k, c)| (k.as_str(), *c)).collect();
    unique_match(answer, &keys)
}

pub fn classify_encounter(
    gateway: &Gateway,
    settings: &ModelSettings,
    record: &EncounterRecord,
) -> Result<EncounterCategory, GatewayError> {
    if record.chief_complaint.trim().is_empty() && record.history_of_present_illness.trim().is_empty() {
        return Ok(EncounterCategory::Unknown);
    }
    let request = settings.request(
        ENCOUNTER_CLASSIFIER_TAG,
        vec![ChatMessage::system(ENCOUNTER_INSTRUCTIONS), ChatMessage::user(record_prompt(record))],
    );
    Ok(parse_encounter_category(&gateway.complete_chat(&request)?))
}

pub fn classify_symptom(
    gateway: &Gateway,
    settings: &ModelSettings,
    record: &EncounterRecord,
) -> Result<SymptomCategory, ClassifyError> {
    let request = settings.request(
        SYMPTOM_CLASSIFIER_TAG,
        vec![ChatMessage::system(SYMPTOM_INSTRUCTIONS), ChatMessage::user(record_prompt(record))],
    );
    let answer = gateway.complete_chat(&request)?;
    parse_symptom_category(&answer).ok_or_else(|| ClassifyError::ClassificationFailed {
        record_id: record.record_id.clone(),
        answer,
    })
}
