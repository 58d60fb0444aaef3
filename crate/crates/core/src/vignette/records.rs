use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError, Reject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    #[serde(rename = "other", alias = "unknown", alias = "other/unknown")]
    OtherOrUnknown,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::OtherOrUnknown => "patient (gender not recorded)",
        })
    }
}

/// One de-identified clinical encounter as delivered by the data provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncounterRecord {
    pub record_id: String,
    pub patient_id: String,
    pub encounter_date: NaiveDate,
    pub age: u32,
    pub gender: Gender,
    pub chief_complaint: String,
    pub history_of_present_illness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_of_systems: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub past_medical_history: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_medications: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allergies: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immunizations: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social_history: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_history: Option<String>,
}

pub const MAX_AGE: u32 = 130;

/// Inclusive date range records must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestConfig {
    pub window: Option<DateWindow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub records: Vec<EncounterRecord>,
    pub rejects: Vec<Reject>,
}

pub fn ingest(path: impl AsRef<Path>, config: &IngestConfig) -> Result<IngestOutcome, JsonlError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| JsonlError::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    ingest_str(&text, config)
}

pub fn ingest_str(text: &str, config: &IngestConfig) -> Result<IngestOutcome, JsonlError> {
    let mut seen = HashSet::new();
    let out = jsonl::parse_jsonl::<EncounterRecord, _>(text, |r| {
        if r.record_id.trim().is_empty() {
            return Err("record_id is empty".into());
        }
        if r.patient_id.trim().is_empty() {
            return Err("patient_id is empty".into());
        }
        if r.age > MAX_AGE {
            return Err(format!("age {} out of range", r.age));
        }
        if let Some(w) = &config.window {
            if !w.contains(r.encounter_date) {
                return Err(format!("encounter_date {} outside ingestion window", r.encounter_date));
            }
        }
        if !seen.insert(r.record_id.clone()) {
            return Err(format!("duplicate record_id {}", r.record_id));
        }
        Ok(())
    })?;
    Ok(IngestOutcome {
        records: out.items,
        rejects: out.rejects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, date: &str) -> String {
        format!(
            r#"{{"record_id":"{id}","patient_id":"p1","encounter_date":"{date}","age":40,"gender":"female","chief_complaint":"cough","history_of_present_illness":"three days"}}"#
        )
    }

    #[test]
    fn three_valid_lines() {
        let text = [line("a", "2022-01-01"), line("b", "2022-01-02"), line("c", "2022-01-03")].join("\n");
        let out = ingest_str(&text, &IngestConfig::default()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn missing_chief_complaint_is_rejected() {
        let bad = r#"{"record_id":"x","patient_id":"p","encounter_date":"2022-01-01","age":3,"gender":"male","history_of_present_illness":"h"}"#;
        let text = [line("a", "2022-01-01"), bad.to_string(), line("b", "2022-01-01")].join("\n");
        let out = ingest_str(&text, &IngestConfig::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 2);
        assert!(out.rejects[0].reason.contains("chief_complaint"));
    }

    #[test]
    fn empty_file() {
        let out = ingest_str("", &IngestConfig::default()).unwrap();
        assert!(out.records.is_empty() && out.rejects.is_empty());
    }

    #[test]
    fn duplicate_ids_and_window() {
        let window = DateWindow {
            start: NaiveDate::from_ymd_opt(2021, 5, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2024, 4, 30).unwrap(),
        };
        let text = [
            line("a", "2022-01-01"),
            line("a", "2022-01-02"),
            line("b", "2020-01-01"),
            line("c", "2023-01-01"),
        ]
        .join("\n");
        let out = ingest_str(&text, &IngestConfig { window: Some(window) }).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.rejects.len(), 2);
    }

    #[test]
    fn gender_aliases() {
        for g in ["\"other\"", "\"unknown\"", "\"other/unknown\""] {
            assert_eq!(serde_json::from_str::<Gender>(g).unwrap(), Gender::OtherOrUnknown);
        }
    }
}
