//! Multi-agent triage state machine.
//!
//! Several internal agents (symptom collector, data planner, summarizer,
//! differential, next steps) each handle one phase. The patient only ever
//! sees text that has passed through the primary agent, so the service reads
//! as a single voice.

pub mod parse;
pub mod prompts;
mod types;

use std::collections::HashSet;
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::ehr::{initial_digest, DataPlan, DataRequest, EhrStore, HealthDataItem, ItemKind};
use crate::gateway::{ChatMessage, Gateway, GatewayError, ModelSettings, Role};
use crate::verifier::{verify_urgency, Corpus, VerifierOutcome, GUIDELINE_VERIFIER_TAG};

pub use types::*;

/// Agent names, used as gateway tags and provenance.
pub mod agents {
    pub const PRIMARY: &str = "primary";
    pub const SYMPTOM_COLLECTOR: &str = "symptom_collector";
    pub const HEALTH_DATA_PLANNER: &str = "health_data_planner";
    pub const HEALTH_DATA_RETRIEVER: &str = "health_data_retriever";
    pub const SUMMARY: &str = "summary";
    pub const DIFFERENTIAL_DIAGNOSIS: &str = "differential_diagnosis";
    pub const NEXT_STEPS: &str = "next_steps";
}

pub const BUDGET_EXCEEDED: &str = "budget_exceeded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriageConfig {
    /// Patient-visible questions allowed while collecting symptoms.
    pub symptom_question_budget: u32,
    /// Narrowing questions allowed during the differential.
    pub ddx_question_budget: u32,
    pub model: ModelSettings,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            symptom_question_budget: 12,
            ddx_question_budget: 6,
            model: ModelSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageSession {
    pub session_id: String,
    pub patient_id: String,
    pub as_of: NaiveDate,
    pub phase: Phase,
    pub ehr_digest: String,
    pub conversation: Vec<VisibleMessage>,
    pub internal_steps: Vec<InternalStep>,
    pub data_plan: Option<DataPlan>,
    pub retrieved: Vec<HealthDataItem>,
    pub case_summary: Option<CaseSummary>,
    pub ddx_state: Option<DdxState>,
    pub recommendation: Option<TriageAssessment>,
    pub verifier_outcome: Option<VerifierOutcome>,
    pub socrates: SocratesChecklist,
    pub phase_history: Vec<Phase>,
    pub annotations: Vec<String>,
    pub events: Vec<SessionEvent>,
    pub symptom_questions: u32,
    pub ddx_questions: u32,
    pub budget_exceeded: bool,
    awaiting_patient: bool,
    ddx_trace: Vec<String>,
}

impl TriageSession {
    fn new(session_id: String, patient_id: String, as_of: NaiveDate, ehr_digest: String) -> Self {
        let mut s = Self {
            session_id,
            patient_id,
            as_of,
            phase: Phase::SymptomCollection,
            ehr_digest,
            conversation: Vec::new(),
            internal_steps: Vec::new(),
            data_plan: None,
            retrieved: Vec::new(),
            case_summary: None,
            ddx_state: None,
            recommendation: None,
            verifier_outcome: None,
            socrates: SocratesChecklist::default(),
            phase_history: vec![Phase::SymptomCollection],
            annotations: Vec::new(),
            events: Vec::new(),
            symptom_questions: 0,
            ddx_questions: 0,
            budget_exceeded: false,
            awaiting_patient: false,
            ddx_trace: Vec::new(),
        };
        s.event(EventKind::PhaseTransition, "orchestrator", Phase::SymptomCollection.to_string());
        s
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Whether the next `agent_turn` must carry the patient's reply.
    pub fn awaiting_patient(&self) -> bool {
        self.awaiting_patient
    }

    fn event(&mut self, kind: EventKind, agent: &str, content: String) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent {
            seq,
            kind,
            agent: agent.to_string(),
            phase: self.phase,
            content,
        });
    }

    fn annotate(&mut self, note: String) {
        self.event(EventKind::Annotation, "orchestrator", note.clone());
        self.annotations.push(note);
    }

    fn push_step(&mut self, agent: &str, input_digest: String, output: String) {
        self.event(EventKind::InternalStep, agent, output.clone());
        self.internal_steps.push(InternalStep {
            agent: agent.to_string(),
            phase: self.phase,
            input_digest,
            output,
        });
    }

    fn push_visible(&mut self, role: Role, content: String, provenance: &str) {
        let kind = match role {
            Role::User => EventKind::PatientMessage,
            _ => EventKind::AgentMessage,
        };
        self.event(kind, provenance, content.clone());
        self.conversation.push(VisibleMessage {
            role,
            content,
            phase: self.phase,
            provenance: provenance.to_string(),
        });
    }

    fn transition(&mut self, next: Phase) {
        self.phase = next;
        self.phase_history.push(next);
        self.event(EventKind::PhaseTransition, "orchestrator", next.to_string());
    }

    fn render_conversation(&self, phase: Option<Phase>) -> String {
        let lines: Vec<String> = self
            .conversation
            .iter()
            .filter(|m| phase.is_none_or(|p| m.phase == p))
            .map(|m| {
                let who = if m.role == Role::User { "Patient" } else { "Agent" };
                format!("{who}: {}", m.content)
            })
            .collect();
        if lines.is_empty() {
            "(nothing yet)".to_string()
        } else {
            lines.join("\n")
        }
    }
}

/// No two consecutive patient-visible messages share a role.
pub fn is_alternating(conversation: &[VisibleMessage]) -> bool {
    conversation.windows(2).all(|w| w[0].role != w[1].role)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TurnResult {
    AskPatient(String),
    PhaseAdvanced(Phase),
    Finished {
        assessment: Box<TriageAssessment>,
        closing_message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DdxTurn {
    Ask(String),
    Final(DdxState),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TriageError {
    #[error("session {0} was already started")]
    DuplicateSession(String),
    #[error("session is finished")]
    SessionFinished,
    #[error("the patient's reply is required for this turn")]
    PatientMessageRequired,
    #[error("no patient reply is expected in phase {0}")]
    UnexpectedPatientMessage(Phase),
    #[error("patient message is empty")]
    EmptyPatientMessage,
    #[error("operation needs phase {expected}, session is in {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("case summary already produced")]
    SummaryAlreadyProduced,
    #[error("case summary invalid: {0}")]
    SummaryInvalid(String),
    #[error("differential invalid: {0}")]
    DdxInvalid(String),
    #[error("assessment invalid: {0}")]
    AssessmentInvalid(String),
    #[error("guideline check failed: {0}")]
    Verifier(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn input_digest(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    let hash = Sha256::digest(&bytes);
    format!("{hash:x}")[..16].to_string()
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

fn clean_list(items: Vec<String>) -> Vec<String> {
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

#[derive(Deserialize)]
struct PlanReply {
    requested: Vec<DataRequest>,
    #[serde(default)]
    rationale: String,
}

fn parse_plan(text: &str) -> Result<DataPlan, String> {
    if parse::declines_data(text) {
        return Ok(DataPlan::default());
    }
    if let Some(r) = parse::parse_structured::<PlanReply>(text) {
        return Ok(DataPlan {
            requested: r.requested,
            rationale: r.rationale,
        });
    }
    if let Some(requested) = parse::parse_structured::<Vec<DataRequest>>(text) {
        return Ok(DataPlan {
            requested,
            rationale: String::new(),
        });
    }
    Err("no JSON data plan found".into())
}

#[derive(Deserialize)]
struct SummaryReply {
    #[serde(default)]
    chief_complaint: String,
    #[serde(default, deserialize_with = "one_or_many")]
    key_positive_findings: Vec<String>,
    #[serde(default, deserialize_with = "one_or_many")]
    key_negative_findings: Vec<String>,
    #[serde(default)]
    relevant_history: String,
    #[serde(default, deserialize_with = "one_or_many")]
    data_highlights: Vec<String>,
}

fn parse_summary(text: &str) -> Result<CaseSummary, String> {
    let r = parse::parse_structured::<SummaryReply>(text).ok_or("no JSON case summary found")?;
    let chief_complaint = r.chief_complaint.trim().to_string();
    if chief_complaint.is_empty() {
        return Err("chief_complaint missing".into());
    }
    Ok(CaseSummary {
        chief_complaint,
        key_positive_findings: clean_list(r.key_positive_findings),
        key_negative_findings: clean_list(r.key_negative_findings),
        relevant_history: r.relevant_history.trim().to_string(),
        data_highlights: clean_list(r.data_highlights),
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CandidateReply {
    Name(String),
    Full {
        condition: String,
        #[serde(default)]
        rationale: String,
    },
}

#[derive(Deserialize)]
struct DdxReplyRaw {
    question: Option<String>,
    rationale: Option<String>,
    candidates: Option<Vec<CandidateReply>>,
    #[serde(default, deserialize_with = "one_or_many")]
    open_questions: Vec<String>,
}

enum DdxReply {
    Question { question: String, rationale: Option<String> },
    Final { candidates: Vec<DdxCandidate>, open_questions: Vec<String> },
}

fn parse_ddx(text: &str) -> Result<DdxReply, String> {
    if let Some(raw) = parse::parse_structured::<DdxReplyRaw>(text) {
        if let Some(cands) = raw.candidates {
            let candidates = normalize_candidates(
                cands
                    .into_iter()
                    .map(|c| match c {
                        CandidateReply::Name(condition) => DdxCandidate { condition, rationale: String::new() },
                        CandidateReply::Full { condition, rationale } => DdxCandidate { condition, rationale },
                    })
                    .collect(),
            );
            if candidates.is_empty() {
                return Err("candidate list is empty".into());
            }
            return Ok(DdxReply::Final {
                candidates,
                open_questions: clean_list(raw.open_questions),
            });
        }
        if let Some(question) = non_blank(raw.question) {
            return Ok(DdxReply::Question {
                question,
                rationale: non_blank(raw.rationale),
            });
        }
        return Err("JSON has neither a question nor candidates".into());
    }
    if parse::has_sentinel(text, prompts::DIFFERENTIAL_COMPLETE) {
        return Err("completion signalled without a candidate list".into());
    }
    let question = text.trim();
    if question.is_empty() {
        return Err("empty reply".into());
    }
    Ok(DdxReply::Question {
        question: question.to_string(),
        rationale: None,
    })
}

#[derive(Deserialize)]
struct AssessmentReply {
    #[serde(default)]
    urgency: Option<String>,
    #[serde(default)]
    urgency_reasoning: String,
    #[serde(default, deserialize_with = "one_or_many")]
    care_recommendations: Vec<String>,
    #[serde(default, deserialize_with = "one_or_many")]
    escalation_signs: Vec<String>,
    #[serde(default)]
    lab_assessment: Option<String>,
    #[serde(default)]
    medication_assessment: Option<String>,
}

struct ParsedAssessment {
    urgency: UrgencyStatus,
    urgency_reasoning: String,
    care_recommendations: Vec<String>,
    escalation_signs: Vec<String>,
    lab_assessment: Option<String>,
    medication_assessment: Option<String>,
}

fn parse_assessment(text: &str) -> Result<ParsedAssessment, String> {
    let r = parse::parse_structured::<AssessmentReply>(text).ok_or("no JSON assessment found")?;
    let urgency = r
        .urgency
        .as_deref()
        .and_then(UrgencyStatus::parse_lenient)
        .ok_or("urgency missing or unrecognized")?;
    let escalation_signs = clean_list(r.escalation_signs);
    if urgency != UrgencyStatus::UrgentOrEmergency && escalation_signs.is_empty() {
        return Err("escalation_signs required unless urgency is urgent_or_emergency".into());
    }
    Ok(ParsedAssessment {
        urgency,
        urgency_reasoning: r.urgency_reasoning.trim().to_string(),
        care_recommendations: clean_list(r.care_recommendations),
        escalation_signs,
        lab_assessment: non_blank(r.lab_assessment),
        medication_assessment: non_blank(r.medication_assessment),
    })
}

/// Plain-language recommendation handed to the primary agent. `urgency` is
/// the level after any guideline adjustment.
pub fn closing_draft(a: &TriageAssessment, urgency: UrgencyStatus) -> String {
    let mut out = match urgency {
        UrgencyStatus::SelfCare => "From what you have told me, this can most likely be looked after at home.".to_string(),
        UrgencyStatus::FollowUpPcp => "From what you have told me, please book a visit with your primary care provider.".to_string(),
        UrgencyStatus::UrgentOrEmergency => {
            "From what you have told me, please go to urgent care or an emergency department now.".to_string()
        }
    };
    if !a.care_recommendations.is_empty() {
        out.push_str(&format!(" In the meantime: {}.", a.care_recommendations.join("; ")));
    }
    if !a.escalation_signs.is_empty() {
        out.push_str(&format!(
            " Please seek care right away if you notice: {}.",
            a.escalation_signs.join("; ")
        ));
    }
    out
}

/// Drives sessions. Holds no per-session state apart from the set of
/// started session ids, so one orchestrator can serve many sessions.
pub struct Orchestrator<'a> {
    gateway: &'a Gateway,
    store: &'a EhrStore,
    guidelines: Option<&'a Corpus>,
    config: TriageConfig,
    started: Mutex<HashSet<String>>,
}

impl<'a> Orchestrator<'a> {
    pub fn new(gateway: &'a Gateway, store: &'a EhrStore, config: TriageConfig) -> Self {
        Self {
            gateway,
            store,
            guidelines: None,
            config,
            started: Mutex::new(HashSet::new()),
        }
    }

    /// Checks each final urgency against `corpus` before the patient is told.
    pub fn with_guidelines(mut self, corpus: &'a Corpus) -> Self {
        self.guidelines = Some(corpus);
        self
    }

    pub fn config(&self) -> &TriageConfig {
        &self.config
    }

    /// Starts a session whose collector sees the record digest as of `as_of`.
    pub fn start_session(
        &self,
        session_id: &str,
        patient_id: &str,
        as_of: NaiveDate,
    ) -> Result<TriageSession, TriageError> {
        let digest = initial_digest(self.store, patient_id, as_of);
        self.start_session_with_digest(session_id, patient_id, as_of, digest)
    }

    pub fn start_session_with_digest(
        &self,
        session_id: &str,
        patient_id: &str,
        as_of: NaiveDate,
        ehr_digest: String,
    ) -> Result<TriageSession, TriageError> {
        if !self.started.lock().expect("session set").insert(session_id.to_string()) {
            return Err(TriageError::DuplicateSession(session_id.to_string()));
        }
        Ok(TriageSession::new(session_id.into(), patient_id.into(), as_of, ehr_digest))
    }

    /// Advances the session by one step. `patient_message` is required when
    /// the previous turn asked the patient something, and is also accepted
    /// as the patient's opening statement before the first question.
    pub fn agent_turn(&self, s: &mut TriageSession, patient_message: Option<&str>) -> Result<TurnResult, TriageError> {
        self.receive(s, patient_message)?;
        match s.phase {
            Phase::SymptomCollection => self.symptom_step(s),
            Phase::HealthDataPlanning => {
                self.plan_health_data(s)?;
                Ok(TurnResult::PhaseAdvanced(s.phase))
            }
            Phase::HealthDataRetrieval => {
                self.retrieve_health_data(s)?;
                Ok(TurnResult::PhaseAdvanced(s.phase))
            }
            Phase::Summarization => {
                self.summarize_case(s)?;
                Ok(TurnResult::PhaseAdvanced(s.phase))
            }
            Phase::DifferentialDiagnosis => match self.ddx_step(s)? {
                DdxTurn::Ask(q) => Ok(TurnResult::AskPatient(q)),
                DdxTurn::Final(_) => Ok(TurnResult::PhaseAdvanced(s.phase)),
            },
            Phase::NextSteps => {
                let (assessment, closing_message) = self.next_steps(s)?;
                Ok(TurnResult::Finished {
                    assessment: Box::new(assessment),
                    closing_message,
                })
            }
            Phase::Done => Err(TriageError::SessionFinished),
        }
    }

    fn receive(&self, s: &mut TriageSession, patient_message: Option<&str>) -> Result<(), TriageError> {
        if s.is_done() {
            return Err(TriageError::SessionFinished);
        }
        let opening = s.phase == Phase::SymptomCollection && s.conversation.is_empty();
        match patient_message {
            None if s.awaiting_patient => Err(TriageError::PatientMessageRequired),
            None => Ok(()),
            Some(_) if !s.awaiting_patient && !opening => Err(TriageError::UnexpectedPatientMessage(s.phase)),
            Some(m) if m.trim().is_empty() => Err(TriageError::EmptyPatientMessage),
            Some(m) => {
                s.push_visible(Role::User, m.trim().to_string(), PROVENANCE_PATIENT);
                s.awaiting_patient = false;
                Ok(())
            }
        }
    }

    fn require(s: &TriageSession, expected: Phase) -> Result<(), TriageError> {
        if s.phase == expected {
            Ok(())
        } else {
            Err(TriageError::WrongPhase { expected, actual: s.phase })
        }
    }

    fn call(&self, s: &mut TriageSession, agent: &str, messages: Vec<ChatMessage>) -> Result<String, TriageError> {
        let digest = input_digest(&messages);
        let request = self.config.model.request(agent, messages);
        let out = self.gateway.complete_chat(&request)?;
        s.push_step(agent, digest, out.clone());
        Ok(out)
    }

    /// One call plus at most one reprompt. The inner `Err` carries the last
    /// parse problem.
    fn call_structured<T>(
        &self,
        s: &mut TriageSession,
        agent: &str,
        messages: Vec<ChatMessage>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Result<T, String>, TriageError> {
        let first = self.call(s, agent, messages.clone())?;
        let problem = match parse(&first) {
            Ok(v) => return Ok(Ok(v)),
            Err(p) => p,
        };
        s.annotate(format!("{agent}: reprompted ({problem})"));
        let mut retry = messages;
        retry.push(ChatMessage::assistant(first));
        retry.push(ChatMessage::user(prompts::reprompt(&problem)));
        let second = self.call(s, agent, retry)?;
        Ok(parse(&second))
    }

    /// Rewrites an internal draft in the service's voice and shows it.
    fn voice(&self, s: &mut TriageSession, draft: &str) -> Result<String, TriageError> {
        let messages = vec![ChatMessage::system(prompts::PRIMARY), ChatMessage::user(draft)];
        let text = self.call(s, agents::PRIMARY, messages)?.trim().to_string();
        s.push_visible(Role::Assistant, text.clone(), PROVENANCE_PRIMARY);
        Ok(text)
    }

    fn ask(&self, s: &mut TriageSession, draft: &str) -> Result<String, TriageError> {
        let text = self.voice(s, draft)?;
        s.awaiting_patient = true;
        Ok(text)
    }

    fn symptom_step(&self, s: &mut TriageSession) -> Result<TurnResult, TriageError> {
        let budget = self.config.symptom_question_budget;
        if s.symptom_questions >= budget {
            s.budget_exceeded = true;
            let missing: Vec<_> = s.socrates.missing().iter().map(|d| d.as_str()).collect();
            s.annotate(format!(
                "{BUDGET_EXCEEDED}: symptom collection stopped after {budget} questions; uncovered: [{}]",
                missing.join(", ")
            ));
            s.transition(Phase::HealthDataPlanning);
            return Ok(TurnResult::PhaseAdvanced(s.phase));
        }
        let missing: Vec<_> = s.socrates.missing().iter().map(|d| d.as_str()).collect();
        let context = format!(
            "Conversation so far:\n{}\n\nDimensions not yet covered: {}",
            s.render_conversation(None),
            if missing.is_empty() { "none".to_string() } else { missing.join(", ") }
        );
        let messages = vec![
            ChatMessage::system(prompts::symptom_collector(&s.ehr_digest)),
            ChatMessage::user(context),
        ];
        let out = self.call(s, agents::SYMPTOM_COLLECTOR, messages)?;
        let signalled = parse::has_sentinel(&out, prompts::SYMPTOM_COLLECTION_COMPLETE);
        let (mut draft, tagged) = parse::split_collector_output(&out, prompts::SYMPTOM_COLLECTION_COMPLETE);
        if signalled || draft.is_empty() {
            if s.socrates.is_complete() {
                s.transition(Phase::HealthDataPlanning);
                return Ok(TurnResult::PhaseAdvanced(s.phase));
            }
            let next = s.socrates.missing()[0];
            s.annotate(format!(
                "symptom_collector {} with {} uncovered; asking about {}",
                if signalled { "signalled completion" } else { "returned no question" },
                s.socrates.missing().iter().map(|d| d.as_str()).collect::<Vec<_>>().join(", "),
                next.as_str()
            ));
            draft = next.fallback_question().to_string();
            s.socrates.mark(next);
        }
        for d in tagged.into_iter().chain(SocratesDimension::mentioned_in(&draft)) {
            s.socrates.mark(d);
        }
        let text = self.ask(s, &draft)?;
        s.symptom_questions += 1;
        Ok(TurnResult::AskPatient(text))
    }

    /// Asks the planner which stored data matters. Advances to retrieval, or
    /// straight to summarization when the plan is empty.
    pub fn plan_health_data(&self, s: &mut TriageSession) -> Result<DataPlan, TriageError> {
        Self::require(s, Phase::HealthDataPlanning)?;
        let context = format!(
            "Conversation:\n{}\n\nRecord digest:\n{}",
            s.render_conversation(None),
            s.ehr_digest
        );
        let messages = vec![
            ChatMessage::system(prompts::HEALTH_DATA_PLANNER),
            ChatMessage::user(context),
        ];
        let plan = match self.call_structured(s, agents::HEALTH_DATA_PLANNER, messages, parse_plan)? {
            Ok(plan) => plan,
            Err(problem) => {
                s.annotate(format!(
                    "warning: health_data_planner output unusable after reprompt ({problem}); continuing without health data"
                ));
                DataPlan::default()
            }
        };
        s.data_plan = Some(plan.clone());
        s.transition(if plan.is_empty() {
            Phase::Summarization
        } else {
            Phase::HealthDataRetrieval
        });
        Ok(plan)
    }

    /// Runs the plan against the store, then confirms which results are the
    /// newest of their series.
    pub fn retrieve_health_data(&self, s: &mut TriageSession) -> Result<Vec<HealthDataItem>, TriageError> {
        Self::require(s, Phase::HealthDataRetrieval)?;
        let plan = s.data_plan.clone().unwrap_or_default();
        let items = self.store.query(&s.patient_id, &plan, s.as_of);
        let plan_json = serde_json::to_vec(&plan).expect("plan serializes");
        let digest = format!("{:x}", Sha256::digest(&plan_json))[..16].to_string();
        let listing = if items.is_empty() {
            "no matching items".to_string()
        } else {
            items.iter().map(|i| format!("- {}", i.describe())).collect::<Vec<_>>().join("\n")
        };
        s.push_step(agents::HEALTH_DATA_RETRIEVER, digest.clone(), listing);

        let latest = self.store.latest_per_series(&s.patient_id, s.as_of);
        let current = items.iter().filter(|i| latest.contains(i)).count();
        s.push_step(
            agents::HEALTH_DATA_PLANNER,
            digest,
            format!(
                "confirmed {current} of {} retrieved items are the most recent on record as of {}",
                items.len(),
                s.as_of
            ),
        );
        s.retrieved = items.clone();
        s.transition(Phase::Summarization);
        Ok(items)
    }

    pub fn summarize_case(&self, s: &mut TriageSession) -> Result<CaseSummary, TriageError> {
        Self::require(s, Phase::Summarization)?;
        if s.case_summary.is_some() {
            return Err(TriageError::SummaryAlreadyProduced);
        }
        let data = if s.retrieved.is_empty() {
            "Retrieved health data: none".to_string()
        } else {
            format!(
                "Retrieved health data:\n{}",
                s.retrieved.iter().map(|i| format!("- {}", i.describe())).collect::<Vec<_>>().join("\n")
            )
        };
        let context = format!("Conversation:\n{}\n\n{data}", s.render_conversation(None));
        let messages = vec![ChatMessage::system(prompts::SUMMARY), ChatMessage::user(context)];
        let mut summary = self
            .call_structured(s, agents::SUMMARY, messages, parse_summary)?
            .map_err(TriageError::SummaryInvalid)?;
        if s.retrieved.is_empty() && !summary.data_highlights.is_empty() {
            s.annotate("summary listed data highlights without retrieved data; dropped".into());
            summary.data_highlights.clear();
        }
        s.case_summary = Some(summary.clone());
        s.transition(Phase::DifferentialDiagnosis);
        Ok(summary)
    }

    /// One differential step, taking the patient's reply to the previous
    /// narrowing question if there was one.
    pub fn ddx_turn(&self, s: &mut TriageSession, patient_message: Option<&str>) -> Result<DdxTurn, TriageError> {
        Self::require(s, Phase::DifferentialDiagnosis)?;
        self.receive(s, patient_message)?;
        self.ddx_step(s)
    }

    fn ddx_step(&self, s: &mut TriageSession) -> Result<DdxTurn, TriageError> {
        let budget = self.config.ddx_question_budget;
        let finalize = s.ddx_questions >= budget;
        let summary = serde_json::to_string_pretty(&s.case_summary).expect("summary serializes");
        let mut context = format!(
            "Case summary:\n{summary}\n\nQuestions asked so far:\n{}\n\nQuestions remaining: {}",
            s.render_conversation(Some(Phase::DifferentialDiagnosis)),
            budget.saturating_sub(s.ddx_questions)
        );
        if finalize {
            context.push_str("\n\n");
            context.push_str(prompts::FINALIZE_NOW);
        }
        let messages = vec![
            ChatMessage::system(prompts::differential_diagnosis(MAX_DDX_CANDIDATES)),
            ChatMessage::user(context),
        ];
        let parsed = self.call_structured(s, agents::DIFFERENTIAL_DIAGNOSIS, messages, |t| match parse_ddx(t)? {
            DdxReply::Question { .. } if finalize => Err("a question was asked after the question budget was spent".into()),
            other => Ok(other),
        })?;
        match parsed.map_err(TriageError::DdxInvalid)? {
            DdxReply::Question { question, rationale } => {
                s.ddx_trace
                    .push(rationale.unwrap_or_else(|| "no rationale provided".to_string()));
                let text = self.ask(s, &question)?;
                s.ddx_questions += 1;
                Ok(DdxTurn::Ask(text))
            }
            DdxReply::Final { candidates, open_questions } => {
                if finalize {
                    s.budget_exceeded = true;
                    s.annotate(format!(
                        "{BUDGET_EXCEEDED}: differential finalized after {budget} questions"
                    ));
                }
                let state = DdxState {
                    candidates,
                    open_questions,
                    reasoning_trace: s.ddx_trace.clone(),
                };
                s.ddx_state = Some(state.clone());
                s.transition(Phase::NextSteps);
                Ok(DdxTurn::Final(state))
            }
        }
    }

    /// Produces the assessment and the patient-facing recommendation, and
    /// finishes the session.
    pub fn next_steps(&self, s: &mut TriageSession) -> Result<(TriageAssessment, String), TriageError> {
        Self::require(s, Phase::NextSteps)?;
        let (Some(case_summary), Some(ddx)) = (s.case_summary.clone(), s.ddx_state.clone()) else {
            return Err(TriageError::AssessmentInvalid("case summary or differential missing".into()));
        };
        let listing = |kind: ItemKind| -> Vec<String> {
            s.retrieved
                .iter()
                .filter(|i| i.item_kind == kind)
                .map(|i| format!("- {}", i.describe()))
                .collect()
        };
        let labs = listing(ItemKind::LabResult);
        let meds = listing(ItemKind::Medication);
        let section = |title: &str, lines: &[String]| {
            if lines.is_empty() {
                format!("{title}: none")
            } else {
                format!("{title}:\n{}", lines.join("\n"))
            }
        };
        let context = format!(
            "Case summary:\n{}\n\nDifferential:\n{}\n\nDifferential conversation:\n{}\n\n{}\n\n{}",
            serde_json::to_string_pretty(&case_summary).expect("summary serializes"),
            serde_json::to_string_pretty(&ddx).expect("ddx serializes"),
            s.render_conversation(Some(Phase::DifferentialDiagnosis)),
            section("Lab results", &labs),
            section("Medications", &meds),
        );
        let messages = vec![ChatMessage::system(prompts::NEXT_STEPS), ChatMessage::user(context)];
        let parsed = self
            .call_structured(s, agents::NEXT_STEPS, messages, parse_assessment)?
            .map_err(TriageError::AssessmentInvalid)?;
        let mut keep = |present: bool, value: Option<String>, what: &str| {
            if !present && value.is_some() {
                s.annotate(format!("{what} assessment dropped: no {what} data was retrieved"));
                return None;
            }
            value
        };
        let lab_assessment = keep(!labs.is_empty(), parsed.lab_assessment, "lab");
        let medication_assessment = keep(!meds.is_empty(), parsed.medication_assessment, "medication");
        let assessment = TriageAssessment {
            case_summary,
            ddx,
            urgency: parsed.urgency,
            urgency_reasoning: parsed.urgency_reasoning,
            care_recommendations: parsed.care_recommendations,
            escalation_signs: parsed.escalation_signs,
            lab_assessment,
            medication_assessment,
        };
        assessment
            .check_invariants()
            .map_err(TriageError::AssessmentInvalid)?;
        let mut shown = assessment.urgency;
        if let Some(corpus) = self.guidelines {
            let outcome = verify_urgency(self.gateway, &self.config.model, &assessment, corpus)
                .map_err(|e| TriageError::Verifier(e.to_string()))?;
            let digest = input_digest(&[ChatMessage::user(
                serde_json::to_string(&assessment.ddx).expect("ddx serializes"),
            )]);
            s.push_step(GUIDELINE_VERIFIER_TAG, digest, outcome.explanation.clone());
            for w in &outcome.warnings {
                s.annotate(format!("guideline_verifier: {w}"));
            }
            shown = outcome.final_urgency;
            s.verifier_outcome = Some(outcome);
        }
        let closing = self.voice(s, &closing_draft(&assessment, shown))?;
        s.recommendation = Some(assessment.clone());
        s.transition(Phase::Done);
        Ok((assessment, closing))
    }
}

#[cfg(test)]
mod tests;
