//! A full scripted encounter batch from a YAML run config, as `forge run`
//! does it, followed by the transcript scan.
//!
//! cargo run --example simulated_encounter [-- OUTPUT_DIR]

use std::path::{Path, PathBuf};

use triage_forge::harness::{check_transcripts, load_transcripts, run_batch, RunConfig, Speaker};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/encounter/run.yaml");
    let mut config = RunConfig::load(&config_path)?;
    let _tmp;
    config.output_dir = match std::env::args().nth(1) {
        Some(dir) => PathBuf::from(dir),
        None => {
            _tmp = tempfile::tempdir()?;
            _tmp.path().to_path_buf()
        }
    };

    let report = run_batch(&config)?;
    println!("{} encounter(s), counts {:?}, {} ms", report.total, report.counts, report.wall_time_ms);

    for t in load_transcripts(&config.output_dir)? {
        println!("\n== {} ({:?})", t.encounter_id, t.termination);
        for turn in &t.turns {
            let who = match turn.speaker {
                Speaker::Patient => "patient",
                Speaker::Agent => "agent",
            };
            println!("[{:<22}] {who:>7}: {}", turn.phase.as_str(), turn.text);
        }
        if let Some(v) = &t.verifier_outcome {
            println!("\n{}", v.explanation);
        }
    }
    let (n, issues) = check_transcripts(&config.output_dir)?;
    println!("\nchecked {n} transcript(s): {} problem(s)", issues.len());
    Ok(())
}
