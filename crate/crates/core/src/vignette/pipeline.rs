use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    balance_sample, build_vignette, classify_encounter, classify_symptom, prior_encounter_note, BalanceConfig,
    BalanceError, ClassifyError, DatasetManifest, EncounterCategory, EncounterRecord, PatientVignette,
    SymptomCategory, VignetteError,
};
use crate::gateway::{Gateway, GatewayError, ModelSettings};

/// A record with its classification results. `symptom_category` is only
/// attempted for initial encounters; `note` explains a failed attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedRecord {
    pub record: EncounterRecord,
    pub encounter_category: EncounterCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symptom_category: Option<SymptomCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn classify_one(
    gateway: &Gateway,
    settings: &ModelSettings,
    record: &EncounterRecord,
) -> Result<ClassifiedRecord, GatewayError> {
    let encounter_category = classify_encounter(gateway, settings, record)?;
    let mut out = ClassifiedRecord {
        record: record.clone(),
        encounter_category,
        symptom_category: None,
        note: None,
    };
    if encounter_category == EncounterCategory::InitialEncounter {
        match classify_symptom(gateway, settings, record) {
            Ok(c) => out.symptom_category = Some(c),
            Err(ClassifyError::ClassificationFailed { answer, .. }) => {
                out.note = Some(format!("symptom classification failed: {answer:?}"))
            }
            Err(ClassifyError::Gateway(e)) => return Err(e),
        }
    }
    Ok(out)
}

/// Classifies every record, fanning out over `parallelism` threads. Output
/// order matches input order.
pub fn classify_records(
    gateway: &Gateway,
    settings: &ModelSettings,
    records: &[EncounterRecord],
    parallelism: usize,
) -> Result<Vec<ClassifiedRecord>, GatewayError> {
    let parallelism = parallelism.max(1);
    if parallelism == 1 || records.len() < 2 {
        return records.iter().map(|r| classify_one(gateway, settings, r)).collect();
    }
    let chunk = records.len().div_ceil(parallelism);
    std::thread::scope(|scope| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|r| classify_one(gateway, settings, r))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(records.len());
        for h in handles {
            out.extend(h.join().expect("classification worker panicked")?);
        }
        Ok(out)
    })
}

/// Initial encounters with a triage-eligible category, grouped by category
/// and sorted by record id.
pub fn eligible_cases(classified: &[ClassifiedRecord]) -> BTreeMap<SymptomCategory, Vec<ClassifiedRecord>> {
    let mut groups: BTreeMap<SymptomCategory, Vec<ClassifiedRecord>> = BTreeMap::new();
    for c in classified {
        if c.encounter_category != EncounterCategory::InitialEncounter {
            continue;
        }
        if let Some(cat) = c.symptom_category.filter(|c| c.is_triage_eligible()) {
            groups.entry(cat).or_default().push(c.clone());
        }
    }
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.record.record_id.cmp(&b.record.record_id));
    }
    groups
}

/// Output of `forge sample`: the manifest plus the chosen record ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSelection {
    pub manifest: DatasetManifest,
    pub selected: BTreeMap<SymptomCategory, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Vignette(#[from] VignetteError),
    #[error("selected record {0} not found among classified records")]
    UnknownRecord(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn select_dataset(classified: &[ClassifiedRecord], config: BalanceConfig) -> Result<DatasetSelection, PipelineError> {
    let groups = eligible_cases(classified);
    let mut dataset = balance_sample(&groups, config)?;
    let failed = classified
        .iter()
        .filter(|c| c.encounter_category == EncounterCategory::InitialEncounter && c.symptom_category.is_none())
        .count();
    if failed > 0 {
        dataset
            .manifest
            .warnings
            .push(format!("{failed} initial encounter(s) dropped: symptom classification failed"));
    }
    dataset.manifest.filters_applied = vec![
        "encounter_category == InitialEncounter".to_string(),
        "symptom_category != Psychological".to_string(),
    ];
    let selected = dataset
        .cases
        .iter()
        .map(|(cat, cases)| (*cat, cases.iter().map(|c| c.record.record_id.clone()).collect()))
        .collect();
    Ok(DatasetSelection {
        manifest: dataset.manifest,
        selected,
    })
}

/// Builds one vignette per selected record, in category then id order.
pub fn build_vignettes(
    classified: &[ClassifiedRecord],
    selection: &DatasetSelection,
) -> Result<Vec<PatientVignette>, PipelineError> {
    let all: Vec<EncounterRecord> = classified.iter().map(|c| c.record.clone()).collect();
    let mut out = Vec::new();
    for (category, ids) in &selection.selected {
        for id in ids {
            let c = classified
                .iter()
                .find(|c| &c.record.record_id == id)
                .ok_or_else(|| PipelineError::UnknownRecord(id.clone()))?;
            if c.encounter_category != EncounterCategory::InitialEncounter || !category.is_triage_eligible() {
                return Err(PipelineError::UnknownRecord(id.clone()));
            }
            let prior = prior_encounter_note(&all, &c.record);
            out.push(build_vignette(&c.record, *category, prior)?);
        }
    }
    Ok(out)
}

/// Writes `<vignette_id>.json` per vignette into `dir`.
pub fn write_vignettes(dir: &Path, vignettes: &[PatientVignette]) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    for v in vignettes {
        let path = dir.join(format!("{}.json", v.vignette_id));
        std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    }
    Ok(())
}

/// Reads every `*.json` vignette in `dir`, sorted by vignette id.
pub fn load_vignettes(dir: &Path) -> Result<Vec<PatientVignette>, PipelineError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(serde_json::from_str(&std::fs::read_to_string(&path)?)?);
        }
    }
    out.sort_by(|a: &PatientVignette, b| a.vignette_id.cmp(&b.vignette_id));
    Ok(out)
}
