use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{EncounterRecord, Gender, SymptomCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub gender: Gender,
}

/// Grounding for one simulated patient. `narrative` is what the simulator
/// sees; `structured_facts` keeps each source section verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientVignette {
    pub vignette_id: String,
    pub source_record_id: String,
    pub patient_id: String,
    pub encounter_date: NaiveDate,
    pub symptom_category: SymptomCategory,
    pub chief_complaint: String,
    pub demographics: Demographics,
    pub narrative: String,
    pub structured_facts: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_encounter_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VignetteError {
    #[error("record {0} has no chief complaint")]
    MissingChiefComplaint(String),
}

/// `(key, header)` in narrative order.
pub const SECTIONS: [(&str, &str); 10] = [
    ("demographics", "Demographics"),
    ("chief_complaint", "Chief complaint"),
    ("history_of_present_illness", "History of present illness"),
    ("review_of_systems", "Review of systems"),
    ("past_medical_history", "Past medical history"),
    ("current_medications", "Current medications"),
    ("allergies", "Allergies"),
    ("immunizations", "Immunizations"),
    ("social_history", "Social history"),
    ("family_history", "Family history"),
];

pub fn describe_demographics(age: u32, gender: Gender) -> String {
    format!("{age}-year-old {gender}")
}

fn section_text(record: &EncounterRecord, key: &str) -> Option<String> {
    let text = match key {
        "demographics" => return Some(describe_demographics(record.age, record.gender)),
        "chief_complaint" => Some(&record.chief_complaint),
        "history_of_present_illness" => Some(&record.history_of_present_illness),
        "review_of_systems" => record.review_of_systems.as_ref(),
        "past_medical_history" => record.past_medical_history.as_ref(),
        "current_medications" => record.current_medications.as_ref(),
        "allergies" => record.allergies.as_ref(),
        "immunizations" => record.immunizations.as_ref(),
        "social_history" => record.social_history.as_ref(),
        "family_history" => record.family_history.as_ref(),
        _ => None,
    }?;
    (!text.trim().is_empty()).then(|| text.clone())
}

/// Non-empty sections of `record` in canonical order.
pub fn record_sections(record: &EncounterRecord) -> IndexMap<String, String> {
    SECTIONS
        .iter()
        .filter_map(|(key, _)| section_text(record, key).map(|t| (key.to_string(), t)))
        .collect()
}

fn render_sections(sections: &IndexMap<String, String>) -> String {
    SECTIONS
        .iter()
        .filter_map(|(key, header)| sections.get(*key).map(|t| format!("{header}: {t}")))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn vignette_id_for(record_id: &str) -> String {
    format!("vig-{record_id}")
}

pub fn build_vignette(
    record: &EncounterRecord,
    symptom_category: SymptomCategory,
    prior_note: Option<String>,
) -> Result<PatientVignette, VignetteError> {
    if record.chief_complaint.trim().is_empty() {
        return Err(VignetteError::MissingChiefComplaint(record.record_id.clone()));
    }
    let structured_facts = record_sections(record);
    Ok(PatientVignette {
        vignette_id: vignette_id_for(&record.record_id),
        source_record_id: record.record_id.clone(),
        patient_id: record.patient_id.clone(),
        encounter_date: record.encounter_date,
        symptom_category,
        chief_complaint: record.chief_complaint.clone(),
        demographics: Demographics {
            age: record.age,
            gender: record.gender,
        },
        narrative: render_sections(&structured_facts),
        structured_facts,
        prior_encounter_note: prior_note,
    })
}

/// Note for the latest encounter of the same patient strictly before
/// `record`'s date. Ties on date go to the greatest record id.
pub fn prior_encounter_note(all: &[EncounterRecord], record: &EncounterRecord) -> Option<String> {
    let prior = all
        .iter()
        .filter(|r| r.patient_id == record.patient_id && r.encounter_date < record.encounter_date)
        .max_by(|a, b| {
            a.encounter_date
                .cmp(&b.encounter_date)
                .then_with(|| a.record_id.cmp(&b.record_id))
        })?;
    Some(format!(
        "Encounter on {} ({})\n{}",
        prior.encounter_date,
        prior.record_id,
        render_sections(&record_sections(prior))
    ))
}
