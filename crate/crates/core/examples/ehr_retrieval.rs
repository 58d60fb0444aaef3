//! Point-in-time health data retrieval: nothing observed after `as_of` is
//! ever returned, and `most_recent` keeps one item per series.

use std::path::Path;

use chrono::NaiveDate;
use triage_forge::ehr::{initial_digest, load_store, DataPlan, DataRequest, ItemKind, Recency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/encounter/ehr.jsonl");
    let store = load_store(path)?.store;
    println!("{} items for {} patients\n", store.len(), store.patient_count());

    let labs = |recency| DataPlan {
        requested: vec![DataRequest {
            item_kind: ItemKind::LabResult,
            name_pattern: "metabolic".into(),
            recency,
        }],
        rationale: String::new(),
    };
    for as_of in ["2024-01-18", "2024-03-01"] {
        let as_of: NaiveDate = as_of.parse()?;
        println!("as of {as_of}:");
        for (label, recency) in [("most recent", Recency::MostRecent), ("all", Recency::All)] {
            let found = store.query("p-0042", &labs(recency), as_of);
            println!("  {label:<12}{:?}", found.iter().map(|i| i.describe()).collect::<Vec<_>>());
        }
    }

    println!("\nrecord digest handed to the symptom collector:");
    println!("{}", initial_digest(&store, "p-0042", "2024-01-18".parse()?));
    Ok(())
}
