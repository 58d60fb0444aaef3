//! Patient-level health data repository queried by the retriever agent.
//!
//! Retrieval is literal: a plan names item kinds and case-insensitive name
//! substrings, and nothing observed after the `as_of` date is ever returned.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError, Reject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    #[serde(alias = "lab", alias = "labs")]
    LabResult,
    #[serde(alias = "medications", alias = "med")]
    Medication,
    #[serde(alias = "allergies")]
    Allergy,
    #[serde(alias = "immunizations", alias = "vaccination")]
    Immunization,
    #[serde(alias = "notes")]
    Note,
    #[serde(alias = "vitals")]
    Vital,
}

impl ItemKind {
    pub const ALL: [ItemKind; 6] = [
        ItemKind::LabResult,
        ItemKind::Medication,
        ItemKind::Allergy,
        ItemKind::Immunization,
        ItemKind::Note,
        ItemKind::Vital,
    ];
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::LabResult => "lab_result",
            ItemKind::Medication => "medication",
            ItemKind::Allergy => "allergy",
            ItemKind::Immunization => "immunization",
            ItemKind::Note => "note",
            ItemKind::Vital => "vital",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HealthDataItem {
    pub patient_id: String,
    pub item_kind: ItemKind,
    pub name: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub observed_date: NaiveDate,
    pub source_record_id: String,
}

impl HealthDataItem {
    /// One-line rendering used in prompts and digests.
    pub fn describe(&self) -> String {
        let unit = self.unit.as_deref().map(|u| format!(" {u}")).unwrap_or_default();
        format!(
            "{} ({}): {}{} on {}",
            self.name, self.item_kind, self.value, unit, self.observed_date
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recency {
    #[default]
    MostRecent,
    All,
    Since(NaiveDate),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRequest {
    pub item_kind: ItemKind,
    pub name_pattern: String,
    #[serde(default)]
    pub recency: Recency,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPlan {
    #[serde(default)]
    pub requested: Vec<DataRequest>,
    #[serde(default)]
    pub rationale: String,
}

impl DataPlan {
    pub fn is_empty(&self) -> bool {
        self.requested.is_empty()
    }
}

type SeriesKey = (ItemKind, String);

/// Read-only after load; share freely across threads.
#[derive(Debug, Clone, Default)]
pub struct EhrStore {
    by_patient: HashMap<String, BTreeMap<SeriesKey, Vec<HealthDataItem>>>,
    len: usize,
}

#[derive(Debug)]
pub struct StoreLoad {
    pub store: EhrStore,
    pub rejects: Vec<Reject>,
}

pub fn load_store(path: impl AsRef<Path>) -> Result<StoreLoad, JsonlError> {
    let out = jsonl::read_jsonl::<HealthDataItem, _>(path, validate_item)?;
    Ok(StoreLoad {
        store: EhrStore::from_items(out.items),
        rejects: out.rejects,
    })
}

fn validate_item(item: &HealthDataItem) -> Result<(), String> {
    if item.patient_id.trim().is_empty() {
        return Err("patient_id is empty".into());
    }
    if item.name.trim().is_empty() {
        return Err("name is empty".into());
    }
    Ok(())
}

fn series_key(item: &HealthDataItem) -> SeriesKey {
    (item.item_kind, item.name.to_lowercase())
}

/// Latest first; equal dates put the greatest source record id first.
fn newest_first(a: &HealthDataItem, b: &HealthDataItem) -> std::cmp::Ordering {
    b.observed_date
        .cmp(&a.observed_date)
        .then_with(|| b.source_record_id.cmp(&a.source_record_id))
        .then_with(|| a.item_kind.cmp(&b.item_kind))
        .then_with(|| a.name.cmp(&b.name))
        .then_with(|| a.value.cmp(&b.value))
}

impl EhrStore {
    pub fn from_items(items: impl IntoIterator<Item = HealthDataItem>) -> Self {
        let mut store = EhrStore::default();
        for item in items {
            store.len += 1;
            store
                .by_patient
                .entry(item.patient_id.clone())
                .or_default()
                .entry(series_key(&item))
                .or_default()
                .push(item);
        }
        for series in store.by_patient.values_mut().flat_map(|m| m.values_mut()) {
            series.sort_by(newest_first);
        }
        store
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn patient_count(&self) -> usize {
        self.by_patient.len()
    }

    /// Items for `patient_id` matching `plan`, none observed after `as_of`,
    /// newest first. Unknown patients yield an empty list.
    pub fn query(&self, patient_id: &str, plan: &DataPlan, as_of: NaiveDate) -> Vec<HealthDataItem> {
        let Some(series) = self.by_patient.get(patient_id) else {
            return Vec::new();
        };
        let mut out: Vec<HealthDataItem> = Vec::new();
        for request in &plan.requested {
            let pattern = request.name_pattern.to_lowercase();
            for ((kind, name), items) in series {
                if *kind != request.item_kind || !name.contains(&pattern) {
                    continue;
                }
                // items are newest first
                let visible = items.iter().filter(|i| i.observed_date <= as_of);
                match request.recency {
                    Recency::MostRecent => out.extend(visible.take(1).cloned()),
                    Recency::All => out.extend(visible.cloned()),
                    Recency::Since(start) => out.extend(visible.filter(|i| i.observed_date >= start).cloned()),
                }
            }
        }
        out.sort_by(newest_first);
        out.dedup();
        out
    }

    /// The latest item of every series for `patient_id` as of `as_of`.
    pub fn latest_per_series(&self, patient_id: &str, as_of: NaiveDate) -> Vec<HealthDataItem> {
        let mut out: Vec<HealthDataItem> = self
            .by_patient
            .get(patient_id)
            .into_iter()
            .flat_map(|m| m.values())
            .filter_map(|items| items.iter().find(|i| i.observed_date <= as_of).cloned())
            .collect();
        out.sort_by(newest_first);
        out
    }
}

pub const DIGEST_CAP: usize = 30;
pub const EMPTY_DIGEST: &str = "no prior records";

/// Bullet list of the most recent item per series, capped at
/// [`DIGEST_CAP`] entries.
pub fn initial_digest(store: &EhrStore, patient_id: &str, as_of: NaiveDate) -> String {
    let latest = store.latest_per_series(patient_id, as_of);
    if latest.is_empty() {
        return EMPTY_DIGEST.to_string();
    }
    latest
        .iter()
        .take(DIGEST_CAP)
        .map(|i| format!("- {}", i.describe()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn item(kind: ItemKind, name: &str, date: &str, src: &str) -> HealthDataItem {
        HealthDataItem {
            patient_id: "p1".into(),
            item_kind: kind,
            name: name.into(),
            value: format!("{name}@{date}"),
            unit: None,
            observed_date: d(date),
            source_record_id: src.into(),
        }
    }

    fn plan(kind: ItemKind, pattern: &str, recency: Recency) -> DataPlan {
        DataPlan {
            requested: vec![DataRequest {
                item_kind: kind,
                name_pattern: pattern.into(),
                recency,
            }],
            rationale: String::new(),
        }
    }

    #[test]
    fn load_five_items_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.jsonl");
        let items: Vec<_> = (1..=5)
            .map(|i| item(ItemKind::Vital, "pulse", &format!("2023-01-0{i}"), "r"))
            .collect();
        jsonl::write_jsonl(&path, &items).unwrap();
        assert_eq!(load_store(&path).unwrap().store.len(), 5);

        std::fs::write(&path, "").unwrap();
        let empty = load_store(&path).unwrap().store;
        assert!(empty.is_empty());
        assert!(empty.query("p1", &plan(ItemKind::Vital, "", Recency::All), d("2030-01-01")).is_empty());
    }

    #[test]
    fn duplicates_retained() {
        let a = item(ItemKind::LabResult, "hemoglobin", "2023-01-01", "r1");
        let store = EhrStore::from_items([a.clone(), a]);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn most_recent_hemoglobin() {
        let store = EhrStore::from_items([
            item(ItemKind::LabResult, "Hemoglobin", "2023-01-01", "r1"),
            item(ItemKind::LabResult, "Hemoglobin", "2023-06-01", "r2"),
        ]);
        let got = store.query("p1", &plan(ItemKind::LabResult, "hemoglobin", Recency::MostRecent), d("2024-01-01"));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].observed_date, d("2023-06-01"));
    }

    #[test]
    fn empty_plan_and_unknown_patient() {
        let store = EhrStore::from_items([item(ItemKind::Note, "visit", "2023-01-01", "r1")]);
        assert!(store.query("p1", &DataPlan::default(), d("2024-01-01")).is_empty());
        assert!(store
            .query("nobody", &plan(ItemKind::Note, "", Recency::All), d("2024-01-01"))
            .is_empty());
    }

    #[test]
    fn future_item_excluded() {
        let store = EhrStore::from_items([
            item(ItemKind::LabResult, "ldl", "2023-01-01", "r1"),
            item(ItemKind::LabResult, "ldl", "2023-09-01", "r2"),
        ]);
        let as_of = d("2023-05-01");
        let latest = store.query("p1", &plan(ItemKind::LabResult, "LDL", Recency::MostRecent), as_of);
        assert_eq!(latest.len(), 1);
        assert_eq!(latest[0].observed_date, d("2023-01-01"));
        let all = store.query("p1", &plan(ItemKind::LabResult, "ldl", Recency::All), as_of);
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn tie_break_on_source_record() {
        let store = EhrStore::from_items([
            item(ItemKind::Vital, "bp", "2023-01-01", "r-a"),
            item(ItemKind::Vital, "bp", "2023-01-01", "r-b"),
        ]);
        let got = store.query("p1", &plan(ItemKind::Vital, "bp", Recency::MostRecent), d("2023-01-01"));
        assert_eq!(got[0].source_record_id, "r-b");
    }

    #[test]
    fn since_filter() {
        let store = EhrStore::from_items([
            item(ItemKind::Medication, "lisinopril", "2022-01-01", "r1"),
            item(ItemKind::Medication, "lisinopril", "2023-01-01", "r2"),
        ]);
        let got = store.query(
            "p1",
            &plan(ItemKind::Medication, "lisin", Recency::Since(d("2022-06-01"))),
            d("2024-01-01"),
        );
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn recency_json_shape() {
        let p: DataPlan = serde_json::from_str(
            r#"{"requested":[{"item_kind":"lab_result","name_pattern":"lipid"},
                              {"item_kind":"note","name_pattern":"x","recency":{"since":"2023-01-01"}},
                              {"item_kind":"vital","name_pattern":"y","recency":"all"}]}"#,
        )
        .unwrap();
        assert_eq!(p.requested[0].recency, Recency::MostRecent);
        assert_eq!(p.requested[1].recency, Recency::Since(d("2023-01-01")));
        assert_eq!(p.requested[2].recency, Recency::All);
    }

    #[test]
    fn digest_lists_items_or_says_none() {
        let store = EhrStore::from_items([
            item(ItemKind::Allergy, "penicillin", "2021-01-01", "r1"),
            item(ItemKind::Medication, "metformin", "2022-01-01", "r2"),
        ]);
        let digest = initial_digest(&store, "p1", d("2023-01-01"));
        assert_eq!(digest.lines().count(), 2);
        assert!(digest.contains("metformin") && digest.contains("penicillin"));
        assert_eq!(initial_digest(&store, "p2", d("2023-01-01")), EMPTY_DIGEST);
    }

    #[test]
    fn digest_is_capped() {
        let items = (0..40).map(|i| item(ItemKind::LabResult, &format!("test{i}"), "2022-01-01", "r"));
        let store = EhrStore::from_items(items);
        assert_eq!(initial_digest(&store, "p1", d("2023-01-01")).lines().count(), DIGEST_CAP);
    }

    fn arb_item() -> impl Strategy<Value = HealthDataItem> {
        (
            0usize..3,
            proptest::sample::select(ItemKind::ALL.to_vec()),
            proptest::sample::select(vec!["Hemoglobin", "hemoglobin A1c", "LDL", "pulse", "aspirin"]),
            0i64..1500,
            0u8..4,
        )
            .prop_map(|(p, kind, name, day, src)| HealthDataItem {
                patient_id: format!("p{p}"),
                item_kind: kind,
                name: name.to_string(),
                value: "v".into(),
                unit: None,
                observed_date: d("2020-01-01") + chrono::Duration::days(day),
                source_record_id: format!("r{src}"),
            })
    }

    fn arb_request() -> impl Strategy<Value = DataRequest> {
        (
            proptest::sample::select(ItemKind::ALL.to_vec()),
            proptest::sample::select(vec!["", "hemo", "LDL", "a", "zzz"]),
        )
            .prop_map(|(kind, pat)| DataRequest {
                item_kind: kind,
                name_pattern: pat.into(),
                recency: Recency::MostRecent,
            })
    }

    proptest! {
        #[test]
        fn no_leakage_and_one_per_series(
            items in proptest::collection::vec(arb_item(), 0..60),
            requests in proptest::collection::vec(arb_request(), 0..4),
            patient in 0usize..3,
            as_of_day in 0i64..1500,
        ) {
            let store = EhrStore::from_items(items.clone());
            let as_of = d("2020-01-01") + chrono::Duration::days(as_of_day);
            let patient = format!("p{patient}");
            let plan = DataPlan { requested: requests, rationale: String::new() };
            let got = store.query(&patient, &plan, as_of);
            prop_assert!(got.iter().all(|i| i.observed_date <= as_of && i.patient_id == patient));
            let mut keys: Vec<_> = got.iter().map(series_key).collect();
            keys.sort();
            let before = keys.len();
            keys.dedup();
            prop_assert_eq!(before, keys.len());
            prop_assert!(got.windows(2).all(|w| w[0].observed_date >= w[1].observed_date));
            // brute force: each returned item is the latest visible one of its series
            for g in &got {
                let best = items.iter()
                    .filter(|i| i.patient_id == patient && series_key(i) == series_key(g) && i.observed_date <= as_of)
                    .max_by(|a, b| a.observed_date.cmp(&b.observed_date).then_with(|| a.source_record_id.cmp(&b.source_record_id)))
                    .unwrap();
                prop_assert_eq!(best.observed_date, g.observed_date);
                prop_assert_eq!(&best.source_record_id, &g.source_record_id);
            }
            prop_assert_eq!(got, store.query(&patient, &plan, as_of));
        }
    }
}
