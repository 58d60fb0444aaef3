//! HTTP API over a directory of persisted encounters, used by the review
//! console. Only `POST /reviews` writes; reviews are append-only files at
//! `reviews/<encounter_id>/<reviewer_id>.json`.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::evaluation::{
    aggregate, builtin_rubric, validate_review_with, Answer, KappaTriple, ReviewResponse, Violation, Q14_DIAGNOSIS_OPTIONS,
};
use crate::harness::{EncounterTranscript, Termination, ENCOUNTERS_DIR, TRANSCRIPT_FILE, VIGNETTE_FILE};
use crate::triage::UrgencyStatus;
use crate::vignette::PatientVignette;

pub const REVIEWS_DIR: &str = "reviews";
/// Header naming the reviewer when the body leaves `reviewer_id` out.
pub const REVIEWER_HEADER: &str = "x-reviewer-id";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("duplicate encounter id {0}")]
    DuplicateEncounter(String),
}

struct Encounter {
    transcript: EncounterTranscript,
    vignette: Option<PatientVignette>,
}

pub struct ServiceState {
    data_dir: PathBuf,
    encounters: BTreeMap<String, Encounter>,
    write_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ServiceError::Parse {
        path: path.display().to_string(),
        source,
    })
}

impl ServiceState {
    /// Loads every encounter under `<data_dir>/encounters`. Transcripts are
    /// immutable while the service runs.
    pub fn load(data_dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let data_dir = data_dir.into();
        let root = data_dir.join(ENCOUNTERS_DIR);
        let mut encounters = BTreeMap::new();
        if root.is_dir() {
            let entries = std::fs::read_dir(&root).map_err(|source| ServiceError::Io {
                path: root.display().to_string(),
                source,
            })?;
            for entry in entries.flatten() {
                let dir = entry.path();
                let tpath = dir.join(TRANSCRIPT_FILE);
                if !tpath.is_file() {
                    continue;
                }
                let transcript: EncounterTranscript = read_json(&tpath)?;
                let vpath = dir.join(VIGNETTE_FILE);
                let vignette = if vpath.is_file() { Some(read_json(&vpath)?) } else { None };
                let id = transcript.encounter_id.clone();
                if encounters.insert(id.clone(), Encounter { transcript, vignette }).is_some() {
                    return Err(ServiceError::DuplicateEncounter(id));
                }
            }
        }
        Ok(Self {
            data_dir,
            encounters,
            write_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn encounter_count(&self) -> usize {
        self.encounters.len()
    }

    fn reviews_dir(&self) -> PathBuf {
        self.data_dir.join(REVIEWS_DIR)
    }

    fn lock_for(&self, encounter_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.write_locks
            .lock()
            .expect("lock table poisoned")
            .entry(encounter_id.to_string())
            .or_default()
            .clone()
    }

    pub fn reviews(&self, encounter_id: Option<&str>) -> Result<Vec<ReviewResponse>, ServiceError> {
        load_reviews(&self.reviews_dir(), encounter_id)
    }
}

/// Reviews stored under `root` (`<encounter_id>/<reviewer_id>.json`),
/// optionally for one encounter, sorted by (encounter, reviewer).
pub fn load_reviews(root: &Path, encounter_id: Option<&str>) -> Result<Vec<ReviewResponse>, ServiceError> {
    let dirs: Vec<PathBuf> = match encounter_id {
        Some(id) => vec![root.join(id)],
        None => match std::fs::read_dir(root) {
            Ok(rd) => rd.flatten().map(|e| e.path()).collect(),
            Err(_) => Vec::new(),
        },
    };
    let mut out = Vec::new();
    for dir in dirs {
        let Ok(rd) = std::fs::read_dir(&dir) else { continue };
        for entry in rd.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "json") {
                out.push(read_json::<ReviewResponse>(&p)?);
            }
        }
    }
    out.sort_by(|a, b| (&a.encounter_id, &a.reviewer_id).cmp(&(&b.encounter_id, &b.reviewer_id)));
    Ok(out)
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/rubric", get(rubric))
        .route("/encounters", get(list_encounters))
        .route("/encounters/{id}/bundle", get(bundle))
        .route("/reviews", get(list_reviews).post(submit_review))
        .route("/reports/aggregate", get(report_aggregate))
        .route("/reports/agreement", get(report_agreement))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn internal(e: ServiceError) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn rubric() -> Json<serde_json::Value> {
    Json(json!({ "questions": builtin_rubric() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterSummary {
    pub encounter_id: String,
    pub vignette_id: String,
    pub patient_id: String,
    pub chief_complaint: Option<String>,
    pub symptom_category: Option<String>,
    pub termination: Termination,
    pub final_urgency: Option<UrgencyStatus>,
    pub reviewers: Vec<String>,
}

async fn list_encounters(State(state): State<Arc<ServiceState>>) -> Response {
    let reviews = match state.reviews(None) {
        Ok(r) => r,
        Err(e) => return internal(e),
    };
    let mut by_encounter: HashMap<&str, Vec<String>> = HashMap::new();
    for r in &reviews {
        by_encounter.entry(&r.encounter_id).or_default().push(r.reviewer_id.clone());
    }
    let list: Vec<EncounterSummary> = state
        .encounters
        .values()
        .map(|e| EncounterSummary {
            encounter_id: e.transcript.encounter_id.clone(),
            vignette_id: e.transcript.vignette_id.clone(),
            patient_id: e.transcript.patient_id.clone(),
            chief_complaint: e.vignette.as_ref().map(|v| v.chief_complaint.clone()),
            symptom_category: e.vignette.as_ref().map(|v| v.symptom_category.label().to_string()),
            termination: e.transcript.termination,
            final_urgency: e.transcript.final_urgency(),
            reviewers: by_encounter.remove(e.transcript.encounter_id.as_str()).unwrap_or_default(),
        })
        .collect();
    Json(list).into_response()
}

/// Maps the rubric's diagnosis options (dx1..dx5) to the ranked differential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisOption {
    pub option_id: String,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterBundle {
    pub encounter_id: String,
    pub vignette: Option<PatientVignette>,
    pub prior_encounter_note: Option<String>,
    pub transcript: EncounterTranscript,
    pub assessment: Option<crate::triage::TriageAssessment>,
    pub verifier_outcome: Option<crate::verifier::VerifierOutcome>,
    pub final_urgency: Option<UrgencyStatus>,
    pub diagnosis_options: Vec<DiagnosisOption>,
}

async fn bundle(State(state): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(e) = state.encounters.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown encounter {id}"));
    };
    let t = &e.transcript;
    let diagnosis_options = t
        .outcome()
        .ddx_candidates
        .into_iter()
        .zip(Q14_DIAGNOSIS_OPTIONS)
        .map(|(condition, option_id)| DiagnosisOption {
            option_id: option_id.to_string(),
            condition,
        })
        .collect();
    Json(EncounterBundle {
        encounter_id: id.clone(),
        vignette: e.vignette.clone(),
        prior_encounter_note: e.vignette.as_ref().and_then(|v| v.prior_encounter_note.clone()),
        transcript: t.clone(),
        assessment: t.assessment.clone(),
        verifier_outcome: t.verifier_outcome.clone(),
        final_urgency: t.final_urgency(),
        diagnosis_options,
    })
    .into_response()
}

#[derive(Debug, Deserialize)]
struct ReviewQuery {
    encounter_id: Option<String>,
    reviewer_id: Option<String>,
}

async fn list_reviews(State(state): State<Arc<ServiceState>>, Query(q): Query<ReviewQuery>) -> Response {
    match state.reviews(q.encounter_id.as_deref()) {
        Ok(mut r) => {
            if let Some(who) = &q.reviewer_id {
                r.retain(|x| &x.reviewer_id == who);
            }
            Json(r).into_response()
        }
        Err(e) => internal(e),
    }
}

/// Body of `POST /reviews`. The server stamps `submitted_at`; the reviewer
/// may come from the body or the `x-reviewer-id` header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSubmission {
    pub encounter_id: String,
    #[serde(default)]
    pub reviewer_id: Option<String>,
    pub answers: BTreeMap<String, Answer>,
    #[serde(default)]
    pub general_comments: Option<String>,
}

fn safe_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

fn unprocessable(violations: Vec<Violation>) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "violations": violations }))).into_response()
}

fn reviewer_violation(detail: &str) -> Response {
    unprocessable(vec![Violation {
        question_id: "review".into(),
        rule: crate::evaluation::ViolationRule::BlankField,
        detail: detail.into(),
    }])
}

async fn submit_review(State(state): State<Arc<ServiceState>>, headers: HeaderMap, body: Bytes) -> Response {
    let sub: ReviewSubmission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed review: {e}")),
    };
    let header = headers
        .get(REVIEWER_HEADER)
        .and_then(|h| h.to_str().ok())
        .map(str::trim)
        .filter(|h| !h.is_empty());
    let reviewer_id = match (sub.reviewer_id.as_deref().map(str::trim), header) {
        (Some(b), Some(h)) if !b.is_empty() && b != h => {
            return error(StatusCode::BAD_REQUEST, "reviewer_id in body and header differ")
        }
        (Some(b), _) if !b.is_empty() => b.to_string(),
        (_, Some(h)) => h.to_string(),
        _ => return reviewer_violation("reviewer_id is blank"),
    };
    if !safe_id(&reviewer_id) {
        return reviewer_violation("reviewer_id may only use letters, digits, '.', '_' and '-'");
    }
    let Some(enc) = state.encounters.get(&sub.encounter_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown encounter {}", sub.encounter_id));
    };
    let review = ReviewResponse {
        encounter_id: sub.encounter_id,
        reviewer_id,
        answers: sub.answers,
        general_comments: sub.general_comments,
        submitted_at: Utc::now(),
    };
    if let Err(v) = validate_review_with(&review, &builtin_rubric(), enc.transcript.final_urgency()) {
        return unprocessable(v);
    }

    let lock = state.lock_for(&review.encounter_id);
    let _guard = lock.lock().await;
    let dir = state.reviews_dir().join(&review.encounter_id);
    let path = dir.join(format!("{}.json", review.reviewer_id));
    if path.exists() {
        return error(
            StatusCode::CONFLICT,
            format!("{} already reviewed {}", review.reviewer_id, review.encounter_id),
        );
    }
    let write = || -> std::io::Result<()> {
        std::fs::create_dir_all(&dir)?;
        let tmp = dir.join(format!(".{}.tmp", review.reviewer_id));
        std::fs::write(&tmp, crate::harness::to_pretty_json(&review))?;
        std::fs::rename(&tmp, &path)
    };
    if let Err(e) = write() {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("storing review: {e}"));
    }
    (StatusCode::CREATED, Json(review)).into_response()
}

#[allow(clippy::result_large_err)]
fn current_report(state: &ServiceState) -> Result<crate::evaluation::AggregateReport, Response> {
    let reviews = state.reviews(None).map_err(internal)?;
    let outcomes: Vec<_> = state.encounters.values().map(|e| e.transcript.outcome()).collect();
    aggregate(&reviews, &outcomes).map_err(|e| error(StatusCode::CONFLICT, e.to_string()))
}

async fn report_aggregate(State(state): State<Arc<ServiceState>>) -> Response {
    match current_report(&state) {
        Ok(r) => Json(r).into_response(),
        Err(resp) => resp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub reviewers: Vec<String>,
    pub n_dual_reviewed: usize,
    pub kappa: KappaTriple,
}

async fn report_agreement(State(state): State<Arc<ServiceState>>) -> Response {
    match current_report(&state) {
        Ok(r) => Json(AgreementReport {
            reviewers: r.reviewers,
            n_dual_reviewed: r.n_dual_reviewed,
            kappa: r.kappa,
        })
        .into_response(),
        Err(resp) => resp,
    }
}
