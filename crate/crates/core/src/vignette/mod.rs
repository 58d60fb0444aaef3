//! Encounter records to patient vignettes: ingestion, visit-type and
//! symptom classification, per-category balancing, and deterministic
//! vignette assembly.

mod balance;
mod build;
mod classify;
mod pipeline;
mod records;

pub use balance::{
    balance_sample, BalanceConfig, BalanceError, BalancedDataset, DatasetManifest, DEFAULT_MAX_PER_CATEGORY,
    DEFAULT_MIN_PER_CATEGORY,
};
pub use build::{
    build_vignette, describe_demographics, prior_encounter_note, record_sections, vignette_id_for, Demographics,
    PatientVignette, VignetteError, SECTIONS,
};
pub use classify::{
    classify_encounter, classify_symptom, parse_encounter_category, parse_symptom_category, ClassifyError,
    EncounterCategory, SymptomCategory, ENCOUNTER_CLASSIFIER_TAG, SYMPTOM_CLASSIFIER_TAG,
};
pub use pipeline::{
    build_vignettes, classify_records, eligible_cases, load_vignettes, select_dataset, write_vignettes,
    ClassifiedRecord, DatasetSelection, PipelineError,
};
pub use records::{ingest, ingest_str, DateWindow, EncounterRecord, Gender, IngestConfig, IngestOutcome, MAX_AGE};
