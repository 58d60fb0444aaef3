//! The simulated patient: opens the conversation, answers questions, and
//! repeats itself verbatim when asked the same thing twice.

use std::path::Path;

use triage_forge::gateway::{Gateway, ScriptedBackend};
use triage_forge::simulator::{
    lint_transcript, over_disclosure_findings, render_simulator_prompt, JargonLexicon, SimulatorSession,
};
use triage_forge::vignette::load_vignettes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/encounter");
    let vignette = load_vignettes(&dir.join("vignettes"))?.remove(0);
    let gw = Gateway::new(ScriptedBackend::from_file(dir.join("script.json"))?);

    let prompt = render_simulator_prompt(&vignette);
    println!("system prompt: {} lines, starts {:?}\n", prompt.lines().count(), prompt.lines().next().unwrap_or(""));

    let mut sim = SimulatorSession::new(vignette);
    println!("patient: {}", sim.open_conversation(&gw)?);
    for q in [
        "Where do you feel it most, and when did it start?",
        "How bad is it on a scale from 1 to 10?",
        "How bad is it, on a scale from 1 to 10?",
    ] {
        println!("doctor:  {q}");
        println!("patient: {}", sim.respond(&gw, q)?);
    }
    println!(
        "\n{} model calls for {} answers; {} facts in the ledger",
        gw.audit_log().len(),
        sim.patient_turns().count(),
        sim.inference_ledger.len()
    );

    let jargon = lint_transcript(&sim.history, &JargonLexicon::default());
    let disclosure = over_disclosure_findings(&sim.history);
    println!("lint: {} jargon finding(s), {} over-disclosure finding(s)", jargon.len(), disclosure.len());
    Ok(())
}
