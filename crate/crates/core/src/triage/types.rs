use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SymptomCollection,
    HealthDataPlanning,
    HealthDataRetrieval,
    Summarization,
    DifferentialDiagnosis,
    NextSteps,
    Done,
}

impl Phase {
    pub const ORDER: [Phase; 7] = [
        Phase::SymptomCollection,
        Phase::HealthDataPlanning,
        Phase::HealthDataRetrieval,
        Phase::Summarization,
        Phase::DifferentialDiagnosis,
        Phase::NextSteps,
        Phase::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::SymptomCollection => "symptom_collection",
            Phase::HealthDataPlanning => "health_data_planning",
            Phase::HealthDataRetrieval => "health_data_retrieval",
            Phase::Summarization => "summarization",
            Phase::DifferentialDiagnosis => "differential_diagnosis",
            Phase::NextSteps => "next_steps",
            Phase::Done => "done",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// True when `phases` walks the canonical order one step at a time, with
/// retrieval skipped only if `plan_was_empty`.
pub fn is_valid_phase_sequence(phases: &[Phase], plan_was_empty: bool) -> bool {
    if phases.first() != Some(&Phase::SymptomCollection) {
        return false;
    }
    phases.windows(2).all(|w| {
        let (a, b) = (w[0] as usize, w[1] as usize);
        b == a + 1 || (plan_was_empty && w[0] == Phase::HealthDataPlanning && w[1] == Phase::Summarization)
    }) && (!plan_was_empty || !phases.contains(&Phase::HealthDataRetrieval))
}

/// Care level, ordered from least to most urgent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrgencyStatus {
    #[serde(alias = "Self-care", alias = "self-care")]
    SelfCare,
    #[serde(alias = "Follow up with PCP", alias = "follow_up_with_pcp")]
    FollowUpPcp,
    #[serde(alias = "Urgent care / emergency", alias = "urgent_care_or_emergency")]
    UrgentOrEmergency,
}

impl UrgencyStatus {
    pub const ALL: [UrgencyStatus; 3] =
        [UrgencyStatus::SelfCare, UrgencyStatus::FollowUpPcp, UrgencyStatus::UrgentOrEmergency];

    pub fn label(self) -> &'static str {
        match self {
            UrgencyStatus::SelfCare => "Self-care",
            UrgencyStatus::FollowUpPcp => "Follow up with PCP",
            UrgencyStatus::UrgentOrEmergency => "Urgent care / emergency",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UrgencyStatus::SelfCare => "self_care",
            UrgencyStatus::FollowUpPcp => "follow_up_pcp",
            UrgencyStatus::UrgentOrEmergency => "urgent_or_emergency",
        }
    }

    /// Accepts ids, labels and common free-text spellings.
    pub fn parse_lenient(text: &str) -> Option<Self> {
        let t: String = text
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .flat_map(|c| c.to_lowercase())
            .collect();
        if t.is_empty() {
            return None;
        }
        if t.contains("urgent") || t.contains("emergen") || t == "er" || t == "ed" {
            Some(UrgencyStatus::UrgentOrEmergency)
        } else if t.contains("pcp") || t.contains("primarycare") || t.contains("followup") {
            Some(UrgencyStatus::FollowUpPcp)
        } else if t.contains("selfcare") || t.contains("homecare") {
            Some(UrgencyStatus::SelfCare)
        } else {
            None
        }
    }
}

impl fmt::Display for UrgencyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseSummary {
    pub chief_complaint: String,
    #[serde(default)]
    pub key_positive_findings: Vec<String>,
    #[serde(default)]
    pub key_negative_findings: Vec<String>,
    #[serde(default)]
    pub relevant_history: String,
    #[serde(default)]
    pub data_highlights: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdxCandidate {
    pub condition: String,
    #[serde(default)]
    pub rationale: String,
}

pub const MAX_DDX_CANDIDATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DdxState {
    /// Most likely first; at most five, no duplicate conditions.
    pub candidates: Vec<DdxCandidate>,
    #[serde(default)]
    pub open_questions: Vec<String>,
    /// One entry per narrowing question asked.
    #[serde(default)]
    pub reasoning_trace: Vec<String>,
}

impl DdxState {
    pub fn top(&self, n: usize) -> impl Iterator<Item = &str> {
        self.candidates.iter().take(n).map(|c| c.condition.as_str())
    }
}

/// Drops blank and repeated (case-insensitive) conditions, keeps order,
/// truncates to [`MAX_DDX_CANDIDATES`].
pub fn normalize_candidates(raw: Vec<DdxCandidate>) -> Vec<DdxCandidate> {
    let mut seen = std::collections::HashSet::new();
    raw.into_iter()
        .filter_map(|mut c| {
            c.condition = c.condition.trim().to_string();
            let key = c.condition.to_lowercase();
            (!key.is_empty() && seen.insert(key)).then_some(c)
        })
        .take(MAX_DDX_CANDIDATES)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageAssessment {
    pub case_summary: CaseSummary,
    pub ddx: DdxState,
    pub urgency: UrgencyStatus,
    pub urgency_reasoning: String,
    pub care_recommendations: Vec<String>,
    pub escalation_signs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_assessment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medication_assessment: Option<String>,
}

impl TriageAssessment {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.ddx.candidates.is_empty() {
            return Err("differential is empty".into());
        }
        if self.ddx.candidates.len() > MAX_DDX_CANDIDATES {
            return Err(format!("{} candidates", self.ddx.candidates.len()));
        }
        if self.urgency != UrgencyStatus::UrgentOrEmergency && self.escalation_signs.is_empty() {
            return Err("escalation signs missing for non-urgent disposition".into());
        }
        if self.case_summary.chief_complaint.trim().is_empty() {
            return Err("chief complaint missing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocratesDimension {
    Site,
    Onset,
    Character,
    Radiation,
    Associations,
    TimeCourse,
    ExacerbatingRelieving,
    Severity,
}

impl SocratesDimension {
    pub const ALL: [SocratesDimension; 8] = [
        SocratesDimension::Site,
        SocratesDimension::Onset,
        SocratesDimension::Character,
        SocratesDimension::Radiation,
        SocratesDimension::Associations,
        SocratesDimension::TimeCourse,
        SocratesDimension::ExacerbatingRelieving,
        SocratesDimension::Severity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SocratesDimension::Site => "site",
            SocratesDimension::Onset => "onset",
            SocratesDimension::Character => "character",
            SocratesDimension::Radiation => "radiation",
            SocratesDimension::Associations => "associations",
            SocratesDimension::TimeCourse => "time_course",
            SocratesDimension::ExacerbatingRelieving => "exacerbating_relieving",
            SocratesDimension::Severity => "severity",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let t: String = text
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .flat_map(|c| c.to_lowercase())
            .collect();
        Some(match t.as_str() {
            "site" | "location" => SocratesDimension::Site,
            "onset" => SocratesDimension::Onset,
            "character" => SocratesDimension::Character,
            "radiation" => SocratesDimension::Radiation,
            "associations" | "association" | "associatedsymptoms" => SocratesDimension::Associations,
            "timecourse" | "time" | "timing" => SocratesDimension::TimeCourse,
            "exacerbatingrelieving" | "exacerbatingrelievingfactors" | "exacerbating" | "relieving"
            | "exacerbatingfactors" | "relievingfactors" => SocratesDimension::ExacerbatingRelieving,
            "severity" => SocratesDimension::Severity,
            _ => return None,
        })
    }

    /// Question used when the collector stops before covering this dimension.
    pub fn fallback_question(self) -> &'static str {
        match self {
            SocratesDimension::Site => "Where exactly do you feel it?",
            SocratesDimension::Onset => "When did this first start?",
            SocratesDimension::Character => "How would you describe the feeling?",
            SocratesDimension::Radiation => "Does it spread or move anywhere else?",
            SocratesDimension::Associations => "Have you noticed any other symptoms along with it?",
            SocratesDimension::TimeCourse => "Has it been constant, or does it come and go?",
            SocratesDimension::ExacerbatingRelieving => "Does anything make it better or worse?",
            SocratesDimension::Severity => "How bad is it on a scale from 1 to 10?",
        }
    }

    fn cues(self) -> &'static [&'static str] {
        match self {
            SocratesDimension::Site => &["where", "location", "located", "which part", "point to"],
            SocratesDimension::Onset => &["when did", "start", "began", "begin", "onset", "first notice"],
            SocratesDimension::Character => &["describe", "feel like", "kind of pain", "type of pain", "sharp", "dull"],
            SocratesDimension::Radiation => &["spread", "radiat", "move anywhere", "travel", "anywhere else"],
            SocratesDimension::Associations => {
                &["other symptom", "along with", "associated", "accompan", "anything else going on"]
            }
            SocratesDimension::TimeCourse => {
                &["come and go", "constant", "getting better", "getting worse", "changed", "how long", "pattern"]
            }
            SocratesDimension::ExacerbatingRelieving => {
                &["better or worse", "makes it better", "makes it worse", "reliev", "trigger", "worse when", "eases"]
            }
            SocratesDimension::Severity => {
                &["scale", "how bad", "severe", "severity", "out of 10", "1 to 10", "intensity"]
            }
        }
    }

    pub fn mentioned_in(text: &str) -> Vec<SocratesDimension> {
        let lower = text.to_lowercase();
        Self::ALL
            .into_iter()
            .filter(|d| d.cues().iter().any(|c| lower.contains(c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SocratesChecklist {
    pub covered: std::collections::BTreeSet<SocratesDimension>,
}

impl SocratesChecklist {
    pub fn mark(&mut self, d: SocratesDimension) {
        self.covered.insert(d);
    }

    pub fn is_complete(&self) -> bool {
        self.covered.len() == SocratesDimension::ALL.len()
    }

    pub fn missing(&self) -> Vec<SocratesDimension> {
        SocratesDimension::ALL
            .into_iter()
            .filter(|d| !self.covered.contains(d))
            .collect()
    }
}

pub const PROVENANCE_PRIMARY: &str = "primary";
pub const PROVENANCE_PATIENT: &str = "patient";

/// One patient-visible message. `role` is from the triage side: the agent
/// speaks as `assistant`, the patient as `user`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleMessage {
    pub role: Role,
    pub content: String,
    pub phase: Phase,
    pub provenance: String,
}

impl VisibleMessage {
    pub fn as_chat(&self) -> ChatMessage {
        ChatMessage::new(self.role, self.content.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalStep {
    pub agent: String,
    pub phase: Phase,
    /// First 16 hex digits of the SHA-256 of the request messages.
    pub input_digest: String,
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PatientMessage,
    AgentMessage,
    InternalStep,
    PhaseTransition,
    Annotation,
}

/// One line of the session event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub agent: String,
    pub phase: Phase,
    pub content: String,
}
