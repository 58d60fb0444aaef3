pub mod gateway;
pub mod jsonl;
pub mod vignette;
pub mod ehr;
pub mod simulator;
pub mod triage;
pub mod verifier;
pub mod evaluation;
pub mod harness;
pub mod service;
