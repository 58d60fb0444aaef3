use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ehr::{DataPlan, HealthDataItem};
use crate::evaluation::EncounterOutcome;
use crate::simulator::{DisclosureFinding, JargonFinding};
use crate::triage::{is_valid_phase_sequence, InternalStep, Phase, TriageAssessment, UrgencyStatus};
use crate::verifier::VerifierOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_index: usize,
    pub speaker: Speaker,
    pub phase: Phase,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    BudgetExceeded,
    Error,
}

/// Advisory checks on what the simulated patient said.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientLint {
    pub jargon: Vec<JargonFinding>,
    pub over_disclosure: Vec<DisclosureFinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterTranscript {
    pub encounter_id: String,
    pub vignette_id: String,
    pub patient_id: String,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub turns: Vec<Turn>,
    pub phases: Vec<Phase>,
    pub internal_steps: Vec<InternalStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_plan: Option<DataPlan>,
    #[serde(default)]
    pub retrieved: Vec<HealthDataItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<TriageAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_outcome: Option<VerifierOutcome>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub annotations: Vec<String>,
    #[serde(default)]
    pub patient_lint: PatientLint,
}

impl EncounterTranscript {
    /// Urgency reviewers see: the verifier's when it ran, else the agent's.
    pub fn final_urgency(&self) -> Option<UrgencyStatus> {
        self.verifier_outcome
            .as_ref()
            .map(|v| v.final_urgency)
            .or(self.assessment.as_ref().map(|a| a.urgency))
    }

    pub fn outcome(&self) -> EncounterOutcome {
        EncounterOutcome {
            encounter_id: self.encounter_id.clone(),
            final_urgency: self.final_urgency(),
            ddx_candidates: self
                .assessment
                .as_ref()
                .map(|a| a.ddx.top(usize::MAX).map(String::from).collect())
                .unwrap_or_default(),
        }
    }
}

/// Structural problems in a transcript; empty when it is well formed.
pub fn check_transcript(t: &EncounterTranscript) -> Vec<String> {
    let mut problems = Vec::new();
    if let Some(first) = t.turns.first() {
        if first.speaker != Speaker::Patient {
            problems.push("first turn is not the patient's".to_string());
        }
    }
    for w in t.turns.windows(2) {
        if w[0].speaker == w[1].speaker {
            problems.push(format!("turns {} and {} share a speaker", w[0].turn_index, w[1].turn_index));
        }
        if w[1].turn_index <= w[0].turn_index {
            problems.push(format!("turn_index not increasing at {}", w[1].turn_index));
        }
        if w[1].phase < w[0].phase {
            problems.push(format!("phase goes backwards at turn {}", w[1].turn_index));
        }
    }
    let plan_empty = t.data_plan.as_ref().is_none_or(|p| p.is_empty());
    if !t.phases.is_empty() && !is_valid_phase_sequence(&t.phases, plan_empty) {
        problems.push(format!("invalid phase sequence {:?}", t.phases));
    }
    match (&t.assessment, t.termination) {
        (None, Termination::Completed | Termination::BudgetExceeded) => {
            problems.push("finished encounter has no assessment".to_string())
        }
        (Some(a), _) => {
            if let Err(e) = a.check_invariants() {
                problems.push(format!("assessment: {e}"));
            }
        }
        _ => {}
    }
    if t.termination == Termination::Error && t.error.is_none() {
        problems.push("error termination without an error message".to_string());
    }
    if let Some(v) = &t.verifier_outcome {
        if v.final_urgency < v.original {
            problems.push("verifier lowered urgency".to_string());
        }
        if v.adjusted != (v.final_urgency != v.original) {
            problems.push("verifier adjusted flag inconsistent".to_string());
        }
        if t.assessment.as_ref().is_some_and(|a| a.urgency != v.original) {
            problems.push("verifier original urgency differs from assessment".to_string());
        }
    }
    problems
}
