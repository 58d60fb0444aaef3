//! Driving the triage state machine by hand: the caller plays the patient
//! and watches phases advance until the final assessment.

use std::path::Path;

use triage_forge::ehr::load_store;
use triage_forge::gateway::{Gateway, ScriptedBackend};
use triage_forge::triage::{Orchestrator, TriageConfig, TurnResult};

const ANSWERS: [(&str, &str); 6] = [
    ("Where do you feel", "In my chest when I cough, since Monday."),
    ("What is the cough like", "Wet, with yellow phlegm."),
    ("other symptoms", "Fever and aches, breathing is fine."),
    ("come and go", "Constant. Worse lying down."),
    ("scale from 1 to 10", "5"),
    ("flu shot", "Yes, in October."),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/encounter");
    let gw = Gateway::new(ScriptedBackend::from_file(dir.join("script.json"))?);
    let store = load_store(dir.join("ehr.jsonl"))?.store;
    let orch = Orchestrator::new(&gw, &store, TriageConfig::default());
    let mut session = orch.start_session("demo", "p-0042", "2024-01-18".parse()?)?;

    let mut reply = Some("I have a cough and a fever.".to_string());
    println!("patient: {}", reply.as_deref().unwrap_or_default());
    loop {
        match orch.agent_turn(&mut session, reply.take().as_deref())? {
            TurnResult::AskPatient(q) => {
                let a = ANSWERS.iter().find(|(k, _)| q.contains(k)).map_or("I'm not sure.", |(_, a)| a);
                println!("agent:   {q}\npatient: {a}");
                reply = Some(a.to_string());
            }
            TurnResult::PhaseAdvanced(p) => println!("  [phase -> {p}]"),
            TurnResult::Finished { assessment, closing_message } => {
                println!("agent:   {closing_message}\n");
                println!("urgency: {}", assessment.urgency.label());
                for (i, c) in assessment.ddx.candidates.iter().enumerate() {
                    println!("  {}. {}", i + 1, c.condition);
                }
                break;
            }
        }
    }
    println!("\n{} internal steps; retrieved:", session.internal_steps.len());
    for item in &session.retrieved {
        println!("  {}", item.describe());
    }
    Ok(())
}
