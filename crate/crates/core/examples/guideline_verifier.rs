//! Guideline checks only ever raise urgency. The first half shows the pure
//! rule, the second matches a differential against a corpus via a scripted
//! judge.

use std::path::Path;

use triage_forge::gateway::{Gateway, ModelSettings, ScriptEntry, ScriptedBackend};
use triage_forge::triage::UrgencyStatus;
use triage_forge::verifier::{apply_guidelines, load_corpus, match_guidelines, GuidelineMatch, GUIDELINE_VERIFIER_TAG};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/encounter/guidelines.json");
    let corpus = load_corpus(path)?;
    let doc = |name: &str| corpus.find(name).expect("fixture document").clone();
    let m = |cond: &str, name: &str| GuidelineMatch {
        ddx_condition: cond.into(),
        guideline: doc(name),
        judge_rationale: String::new(),
    };

    println!("{:<26}{:<26}final", "agent said", "matched");
    for original in UrgencyStatus::ALL {
        for matches in [vec![], vec![m("Cold", "Common cold")], vec![m("Flu", "Influenza"), m("PE", "PE")]] {
            let out = apply_guidelines(original, &matches);
            let names: Vec<&str> = matches.iter().map(|g| g.guideline.guideline_id.as_str()).collect();
            println!("{:<26}{:<26}{}", original.label(), names.join(","), out.final_urgency.label());
        }
    }

    let gw = Gateway::new(ScriptedBackend::new(vec![
        ScriptEntry::for_tag(GUIDELINE_VERIFIER_TAG, "Influenza\nsame illness").containing("Diagnosis: Flu-like illness"),
        ScriptEntry::for_tag(GUIDELINE_VERIFIER_TAG, "Sinusitis").containing("Diagnosis: Sinus infection"),
        ScriptEntry::for_tag(GUIDELINE_VERIFIER_TAG, "none"),
    ]));
    let ddx = ["Flu-like illness", "Sinus infection", "Tension headache"].map(String::from);
    let report = match_guidelines(&gw, &ModelSettings::default(), &ddx, &corpus)?;
    println!();
    for g in &report.matches {
        println!("{} -> {} ({})", g.ddx_condition, g.guideline.condition_name, g.guideline.recommended_urgency.label());
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    let outcome = apply_guidelines(UrgencyStatus::SelfCare, &report.matches);
    println!("{}", outcome.explanation);
    Ok(())
}
