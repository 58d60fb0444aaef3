//! Simulated encounters end to end: patient simulator against the triage
//! orchestrator, then the guideline pass, persisted one directory per
//! encounter.

mod config;
mod transcript;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ehr::{load_store, EhrStore};
use crate::gateway::{ChatBackend, Gateway, ModelSettings, RemoteConfig, RemoteHttpBackend, Role, ScriptedBackend};
use crate::jsonl::{write_jsonl, JsonlError};
use crate::simulator::{lint_transcript, over_disclosure_findings, JargonLexicon, SimulatorSession};
use crate::triage::{Orchestrator, SessionEvent, TriageConfig, TurnResult};
use crate::verifier::{load_corpus, Corpus, CorpusError};
use crate::vignette::{load_vignettes, PatientVignette, PipelineError};

pub use config::{BackendConfig, Budgets, ConfigError, RunConfig};
pub use transcript::{check_transcript, EncounterTranscript, PatientLint, Speaker, Termination, Turn};

pub const ENCOUNTERS_DIR: &str = "encounters";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const VIGNETTE_FILE: &str = "vignette.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const MANIFEST_FILE: &str = "batch_manifest.json";

/// Safety stop for the encounter loop; budgets normally end it much sooner.
const MAX_LOOP_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, Default)]
pub struct Clock(Option<DateTime<Utc>>);

impl Clock {
    pub fn system() -> Self {
        Self(None)
    }

    pub fn fixed(at: DateTime<Utc>) -> Self {
        Self(Some(at))
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.0.unwrap_or_else(Utc::now)
    }
}

/// Shared, read-only inputs for running encounters.
pub struct EncounterContext<'a> {
    pub store: &'a EhrStore,
    pub corpus: Option<&'a Corpus>,
    pub triage: TriageConfig,
    pub simulator: ModelSettings,
    pub lexicon: &'a JargonLexicon,
    pub clock: Clock,
}

pub struct EncounterRun {
    pub transcript: EncounterTranscript,
    pub events: Vec<SessionEvent>,
}

fn content_id(t: &EncounterTranscript) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        vignette_id: &'a str,
        turns: &'a [Turn],
        internal_steps: &'a [crate::triage::InternalStep],
        assessment: &'a Option<crate::triage::TriageAssessment>,
        verifier: &'a Option<crate::verifier::VerifierOutcome>,
        termination: Termination,
        error: &'a Option<String>,
    }
    let key = Key {
        vignette_id: &t.vignette_id,
        turns: &t.turns,
        internal_steps: &t.internal_steps,
        assessment: &t.assessment,
        verifier: &t.verifier_outcome,
        termination: t.termination,
        error: &t.error,
    };
    let hash = Sha256::digest(serde_json::to_vec(&key).expect("key serializes"));
    format!("enc-{}", &format!("{hash:x}")[..12])
}

/// Runs one encounter. Never fails: errors end the encounter with
/// `Termination::Error` and whatever was said so far.
pub fn run_encounter(vignette: &PatientVignette, gateway: &Gateway, ctx: &EncounterContext) -> EncounterRun {
    let started_at = ctx.clock.now();
    let mut orch = Orchestrator::new(gateway, ctx.store, ctx.triage.clone());
    if let Some(corpus) = ctx.corpus {
        orch = orch.with_guidelines(corpus);
    }
    let mut sim = SimulatorSession::with_settings(vignette.clone(), ctx.simulator.clone());
    let mut session = orch
        .start_session(&vignette.vignette_id, &vignette.patient_id, vignette.encounter_date)
        .expect("fresh orchestrator has no sessions");

    let mut error: Option<String> = None;
    let mut assessment = None;
    let mut closing_sent = false;
    match sim.open_conversation(gateway) {
        Err(e) => error = Some(format!("simulator: {e}")),
        Ok(opening) => {
            let mut pending = Some(opening);
            for _ in 0..MAX_LOOP_STEPS {
                match orch.agent_turn(&mut session, pending.take().as_deref()) {
                    Ok(TurnResult::AskPatient(q)) => match sim.respond(gateway, &q) {
                        Ok(a) => pending = Some(a),
                        Err(e) => {
                            error = Some(format!("simulator: {e}"));
                            break;
                        }
                    },
                    Ok(TurnResult::PhaseAdvanced(_)) => {}
                    Ok(TurnResult::Finished { assessment: a, .. }) => {
                        assessment = Some(*a);
                        closing_sent = true;
                        break;
                    }
                    Err(e) => {
                        error = Some(format!("triage: {e}"));
                        break;
                    }
                }
            }
            if !closing_sent && error.is_none() {
                error = Some(format!("encounter did not finish within {MAX_LOOP_STEPS} steps"));
            }
        }
    }

    // the opening statement is recorded by the orchestrator, except when the
    // simulator failed before the first turn
    let turns: Vec<Turn> = session
        .conversation
        .iter()
        .enumerate()
        .map(|(i, m)| Turn {
            turn_index: i,
            speaker: if m.role == Role::User { Speaker::Patient } else { Speaker::Agent },
            phase: m.phase,
            text: m.content.clone(),
        })
        .collect();

    let termination = match (&error, session.budget_exceeded) {
        (Some(_), _) => Termination::Error,
        (None, true) => Termination::BudgetExceeded,
        (None, false) => Termination::Completed,
    };
    let mut transcript = EncounterTranscript {
        encounter_id: String::new(),
        vignette_id: vignette.vignette_id.clone(),
        patient_id: vignette.patient_id.clone(),
        started_at,
        ended_at: ctx.clock.now(),
        turns,
        phases: session.phase_history.clone(),
        internal_steps: session.internal_steps.clone(),
        data_plan: session.data_plan.clone(),
        retrieved: session.retrieved.clone(),
        assessment,
        verifier_outcome: session.verifier_outcome.clone(),
        termination,
        error,
        annotations: session.annotations.clone(),
        patient_lint: PatientLint {
            jargon: lint_transcript(&sim.history, ctx.lexicon),
            over_disclosure: over_disclosure_findings(&sim.history),
        },
    };
    transcript.encounter_id = content_id(&transcript);
    EncounterRun {
        transcript,
        events: session.events,
    }
}

/// Transcript for an encounter that could not start at all.
fn failed_transcript(vignette: &PatientVignette, clock: Clock, error: String) -> EncounterTranscript {
    let now = clock.now();
    let mut t = EncounterTranscript {
        encounter_id: String::new(),
        vignette_id: vignette.vignette_id.clone(),
        patient_id: vignette.patient_id.clone(),
        started_at: now,
        ended_at: now,
        turns: Vec::new(),
        phases: Vec::new(),
        internal_steps: Vec::new(),
        data_plan: None,
        retrieved: Vec::new(),
        assessment: None,
        verifier_outcome: None,
        termination: Termination::Error,
        error: Some(error),
        annotations: Vec::new(),
        patient_lint: PatientLint::default(),
    };
    t.encounter_id = content_id(&t);
    t
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// Writes `encounters/<encounter_id>/{transcript.json, vignette.json,
/// events.jsonl}` under `out_dir` and returns the encounter directory.
pub fn persist_encounter(
    out_dir: &Path,
    vignette: &PatientVignette,
    transcript: &EncounterTranscript,
    events: &[SessionEvent],
) -> std::io::Result<PathBuf> {
    let dir = out_dir.join(ENCOUNTERS_DIR).join(&transcript.encounter_id);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(TRANSCRIPT_FILE), to_pretty_json(transcript))?;
    std::fs::write(dir.join(VIGNETTE_FILE), to_pretty_json(vignette))?;
    write_jsonl(dir.join(EVENTS_FILE), events)?;
    Ok(dir)
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("loading dataset: {0}")]
    Dataset(#[from] PipelineError),
    #[error("dataset {0} contains no vignettes")]
    EmptyDataset(String),
    #[error("loading health records: {0}")]
    Store(#[from] JsonlError),
    #[error("loading guideline corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("output directory {path} is not writable: {source}")]
    OutputNotWritable { path: String, source: std::io::Error },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub vignette_id: String,
    pub encounter_id: String,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub parallelism: usize,
    pub total: usize,
    pub counts: BTreeMap<Termination, usize>,
    pub encounters: Vec<BatchEntry>,
    pub max_in_flight: usize,
    pub wall_time_ms: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

enum BackendSource {
    ScriptFile(PathBuf),
    ScriptDir(PathBuf),
    Remote(Arc<dyn ChatBackend>),
}

impl BackendSource {
    fn from_config(config: &RunConfig) -> Self {
        match &config.backend {
            BackendConfig::Scripted { script } if script.is_dir() => BackendSource::ScriptDir(script.clone()),
            BackendConfig::Scripted { script } => BackendSource::ScriptFile(script.clone()),
            BackendConfig::RemoteHttp {
                base_url,
                token_env,
                timeout_secs,
            } => {
                let mut rc = RemoteConfig::new(base_url.clone());
                rc.token_env = token_env.clone();
                if let Some(t) = timeout_secs {
                    rc.timeout_secs = *t;
                }
                rc.seed = Some(config.seed);
                BackendSource::Remote(Arc::new(RemoteHttpBackend::new(rc)))
            }
        }
    }

    /// A fresh gateway per encounter, so script turn counters never leak
    /// between encounters.
    fn gateway_for(&self, vignette_id: &str) -> Result<Gateway, String> {
        let load = |p: &Path| {
            ScriptedBackend::from_file(p)
                .map(Gateway::new)
                .map_err(|e| format!("loading script {}: {e}", p.display()))
        };
        match self {
            BackendSource::ScriptFile(p) => load(p),
            BackendSource::ScriptDir(dir) => {
                let own = dir.join(format!("{vignette_id}.json"));
                let fallback = dir.join("default.json");
                if own.is_file() {
                    load(&own)
                } else if fallback.is_file() {
                    load(&fallback)
                } else {
                    Err(format!("no script for {vignette_id} in {}", dir.display()))
                }
            }
            BackendSource::Remote(b) => Ok(Gateway::from_arc(b.clone())),
        }
    }
}

fn ensure_writable(dir: &Path) -> Result<(), HarnessError> {
    let err = |source| HarnessError::OutputNotWritable {
        path: dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(err)?;
    std::fs::remove_file(&probe).map_err(err)?;
    Ok(())
}

/// Runs every vignette in the dataset with at most `parallelism` encounters
/// in flight, writing one transcript per vignette plus a batch manifest.
pub fn run_batch(config: &RunConfig) -> Result<BatchReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let vignettes = load_vignettes(&config.dataset)?;
    if vignettes.is_empty() {
        return Err(HarnessError::EmptyDataset(config.dataset.display().to_string()));
    }
    ensure_writable(&config.output_dir)?;
    let mut warnings = Vec::new();
    let store = match &config.ehr_store {
        Some(p) => {
            let loaded = load_store(p)?;
            warnings.extend(
                loaded
                    .rejects
                    .iter()
                    .map(|r| format!("health record line {} rejected: {}", r.line, r.reason)),
            );
            loaded.store
        }
        None => EhrStore::default(),
    };
    let corpus = config.corpus.as_ref().map(load_corpus).transpose()?;
    let lexicon = JargonLexicon::default();
    let ctx = EncounterContext {
        store: &store,
        corpus: corpus.as_ref(),
        triage: config.triage_config(),
        simulator: config.model.clone(),
        lexicon: &lexicon,
        clock: config.fixed_clock.map_or(Clock::system(), Clock::fixed),
    };
    let source = BackendSource::from_config(config);

    let n = vignettes.len();
    let next = AtomicUsize::new(0);
    let in_flight = AtomicUsize::new(0);
    let max_in_flight = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<BatchEntry>>> = Mutex::new(vec![None; n]);
    let workers = config.parallelism.min(n);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                max_in_flight.fetch_max(now, Ordering::SeqCst);
                let v = &vignettes[i];
                let run = match source.gateway_for(&v.vignette_id) {
                    Err(e) => EncounterRun {
                        transcript: failed_transcript(v, ctx.clock, e),
                        events: Vec::new(),
                    },
                    Ok(gw) => catch_unwind(AssertUnwindSafe(|| run_encounter(v, &gw, &ctx))).unwrap_or_else(|p| {
                        let msg = p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "unknown panic".into());
                        EncounterRun {
                            transcript: failed_transcript(v, ctx.clock, format!("panic: {msg}")),
                            events: Vec::new(),
                        }
                    }),
                };
                let mut entry = BatchEntry {
                    vignette_id: v.vignette_id.clone(),
                    encounter_id: run.transcript.encounter_id.clone(),
                    termination: run.transcript.termination,
                    error: run.transcript.error.clone(),
                };
                if let Err(e) = persist_encounter(&config.output_dir, v, &run.transcript, &run.events) {
                    entry.termination = Termination::Error;
                    entry.error = Some(format!("persisting transcript: {e}"));
                }
                in_flight.fetch_sub(1, Ordering::SeqCst);
                results.lock().expect("results lock")[i] = Some(entry);
            });
        }
    });

    let encounters: Vec<BatchEntry> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|e| e.expect("every vignette ran"))
        .collect();
    let mut counts: BTreeMap<Termination, usize> = [Termination::Completed, Termination::BudgetExceeded, Termination::Error]
        .into_iter()
        .map(|t| (t, 0))
        .collect();
    for e in &encounters {
        *counts.entry(e.termination).or_default() += 1;
    }
    let report = BatchReport {
        seed: config.seed,
        parallelism: config.parallelism,
        total: n,
        counts,
        encounters,
        max_in_flight: max_in_flight.load(Ordering::SeqCst),
        wall_time_ms: started.elapsed().as_millis() as u64,
        warnings,
    };
    std::fs::write(config.output_dir.join(MANIFEST_FILE), to_pretty_json(&report))?;
    Ok(report)
}

fn find_transcripts(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_transcripts(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == TRANSCRIPT_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads every transcript under `<out_dir>/encounters`, sorted by id.
pub fn load_transcripts(out_dir: &Path) -> Result<Vec<EncounterTranscript>, HarnessError> {
    let root = out_dir.join(ENCOUNTERS_DIR);
    let mut paths = Vec::new();
    if root.is_dir() {
        find_transcripts(&root, &mut paths)?;
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        out.push(serde_json::from_str::<EncounterTranscript>(&text).map_err(std::io::Error::other)?);
    }
    out.sort_by(|a, b| a.encounter_id.cmp(&b.encounter_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptIssue {
    pub path: PathBuf,
    pub problem: String,
}

/// Scans every `transcript.json` below `dir`.
pub fn check_transcripts(dir: &Path) -> std::io::Result<(usize, Vec<TranscriptIssue>)> {
    let mut paths = Vec::new();
    find_transcripts(dir, &mut paths)?;
    paths.sort();
    let mut issues = Vec::new();
    for p in &paths {
        let text = std::fs::read_to_string(p)?;
        match serde_json::from_str::<EncounterTranscript>(&text) {
            Err(e) => issues.push(TranscriptIssue {
                path: p.clone(),
                problem: format!("unreadable: {e}"),
            }),
            Ok(t) => issues.extend(check_transcript(&t).into_iter().map(|problem| TranscriptIssue {
                path: p.clone(),
                problem,
            })),
        }
    }
    Ok((paths.len(), issues))
}
