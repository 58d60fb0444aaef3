//! Records to vignettes on the bundled 200-record fixture: ingest, classify
//! with a scripted classifier, balance per category, build vignettes.
//!
//! cargo run --example vignette_pipeline [-- SEED]

use std::path::Path;

use triage_forge::gateway::{Gateway, ModelSettings, ScriptedBackend};
use triage_forge::vignette::{
    build_vignettes, classify_records, ingest, select_dataset, BalanceConfig, EncounterCategory, IngestConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/pipeline");

    let ingested = ingest(dir.join("records.jsonl"), &IngestConfig::default())?;
    println!("ingested {} records ({} rejected)", ingested.records.len(), ingested.rejects.len());

    let gw = Gateway::new(ScriptedBackend::from_file(dir.join("classifier_script.json"))?);
    let classified = classify_records(&gw, &ModelSettings::default(), &ingested.records, 4)?;
    for cat in EncounterCategory::ALL {
        let n = classified.iter().filter(|c| c.encounter_category == cat).count();
        println!("  {:<18}{n:>4}", cat.label());
    }

    let selection = select_dataset(&classified, BalanceConfig { seed, ..Default::default() })?;
    println!("\nbalanced dataset (seed {seed}):");
    for (cat, n) in &selection.manifest.counts {
        println!("  {:<18}{n:>4} of {}", cat.label(), selection.manifest.available[cat]);
    }
    for w in &selection.manifest.warnings {
        println!("  warning: {w}");
    }

    let vignettes = build_vignettes(&classified, &selection)?;
    let with_prior = vignettes.iter().filter(|v| v.prior_encounter_note.is_some()).count();
    println!("\n{} vignettes, {with_prior} with a prior-encounter note", vignettes.len());
    println!("\nfirst vignette:\n{}", vignettes[0].narrative);
    Ok(())
}
