use super::*;
use crate::ehr::Recency;
use crate::gateway::{ScriptEntry, ScriptedBackend, LATEST_USER_PLACEHOLDER};

const COLLECTOR_TURNS: [&str; 3] = [
    "Where is the pain, and when did it start?\nSOCRATES: site, onset",
    "What does it feel like, and does it spread anywhere?\nSOCRATES: character, radiation",
    "Any other symptoms, does it come and go, what makes it better or worse, and how bad is it?\nSOCRATES: associations, time_course, exacerbating_relieving, severity",
];

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn collector_entries() -> Vec<ScriptEntry> {
    let mut v: Vec<_> = COLLECTOR_TURNS
        .iter()
        .enumerate()
        .map(|(i, t)| ScriptEntry::for_tag(agents::SYMPTOM_COLLECTOR, *t).at_turn(i))
        .collect();
    v.push(ScriptEntry::for_tag(agents::SYMPTOM_COLLECTOR, prompts::SYMPTOM_COLLECTION_COMPLETE));
    v
}

const SUMMARY_JSON: &str = r#"```json
{"chief_complaint": "chest pain", "key_positive_findings": ["pressure-like pain"], "key_negative_findings": ["no fever"], "relevant_history": "smoker", "data_highlights": []}
```"#;

const DDX_FINAL: &str = "DIFFERENTIAL_COMPLETE\n```json\n{\"candidates\": [{\"condition\": \"Costochondritis\", \"rationale\": \"tender\"}, \"Muscle strain\", {\"condition\": \"GERD\"}], \"open_questions\": []}\n```";

const SELF_CARE: &str = r#"```json
{"urgency": "self_care", "urgency_reasoning": "reproducible wall pain", "care_recommendations": ["rest", "ibuprofen"], "escalation_signs": ["shortness of breath", "pain spreading to the arm"], "lab_assessment": "lipids fine"}
```"#;

fn base_entries(plan: &str, ddx: Vec<&str>, next: &str) -> Vec<ScriptEntry> {
    let mut v = vec![ScriptEntry::for_tag(agents::PRIMARY, LATEST_USER_PLACEHOLDER)];
    v.extend(collector_entries());
    v.push(ScriptEntry::for_tag(agents::HEALTH_DATA_PLANNER, plan));
    v.push(ScriptEntry::for_tag(agents::SUMMARY, SUMMARY_JSON));
    for (i, d) in ddx.iter().enumerate() {
        v.push(ScriptEntry::for_tag(agents::DIFFERENTIAL_DIAGNOSIS, *d).at_turn(i));
    }
    v.push(ScriptEntry::for_tag(agents::NEXT_STEPS, next));
    v
}

fn store() -> EhrStore {
    let item = |kind, name: &str, value: &str, d: &str, id: &str| HealthDataItem {
        patient_id: "p1".into(),
        item_kind: kind,
        name: name.into(),
        value: value.into(),
        unit: None,
        observed_date: date(d),
        source_record_id: id.into(),
    };
    EhrStore::from_items([
        item(ItemKind::LabResult, "Lipid panel", "LDL 130", "2023-01-10", "r1"),
        item(ItemKind::Medication, "Atorvastatin", "20 mg", "2023-01-10", "r1"),
        item(ItemKind::LabResult, "Lipid panel", "LDL 150", "2024-06-01", "r9"),
    ])
}

fn gw(entries: Vec<ScriptEntry>) -> Gateway {
    Gateway::new(ScriptedBackend::new(entries))
}

/// Plays the whole session, answering every question with `answer`.
fn drive(
    orch: &Orchestrator,
    s: &mut TriageSession,
    answer: impl Fn(&str) -> String,
) -> Result<(TriageAssessment, String), TriageError> {
    let pending = s.awaiting_patient().then(|| answer(""));
    drive_from(orch, s, pending, answer)
}

fn drive_from(
    orch: &Orchestrator,
    s: &mut TriageSession,
    mut pending: Option<String>,
    answer: impl Fn(&str) -> String,
) -> Result<(TriageAssessment, String), TriageError> {
    for _ in 0..200 {
        match orch.agent_turn(s, pending.as_deref())? {
            TurnResult::AskPatient(q) => pending = Some(answer(&q)),
            TurnResult::PhaseAdvanced(_) => pending = None,
            TurnResult::Finished { assessment, closing_message } => return Ok((*assessment, closing_message)),
        }
    }
    panic!("session did not finish");
}

const LIPID_PLAN: &str = r#"```json
{"requested": [{"item_kind": "lab_result", "name_pattern": "lipid"}], "rationale": "cardiac risk"}
```"#;

#[test]
fn fresh_session_asks_opening_question() {
    let g = gw(base_entries("none needed", vec![DDX_FINAL], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let TurnResult::AskPatient(q) = orch.agent_turn(&mut s, None).unwrap() else { panic!() };
    assert_eq!(q, "Where is the pain, and when did it start?");
    assert!(s.awaiting_patient());
    assert_eq!(
        orch.agent_turn(&mut s, None).unwrap_err(),
        TriageError::PatientMessageRequired
    );
}

#[test]
fn duplicate_session_rejected() {
    let g = gw(vec![]);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    assert_eq!(
        orch.start_session("s1", "p1", date("2024-07-01")).unwrap_err(),
        TriageError::DuplicateSession("s1".into())
    );
}

#[test]
fn digest_reflects_record_as_of_start() {
    let g = gw(vec![]);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let s = orch.start_session("a", "p1", date("2023-06-01")).unwrap();
    assert_eq!(s.ehr_digest.lines().count(), 2);
    assert!(s.ehr_digest.contains("LDL 130") && s.ehr_digest.contains("Atorvastatin"));
    let empty = orch.start_session("b", "nobody", date("2023-06-01")).unwrap();
    assert_eq!(empty.ehr_digest, crate::ehr::EMPTY_DIGEST);
    assert_eq!(empty.phase, Phase::SymptomCollection);
}

#[test]
fn opening_statement_accepted_once() {
    let g = gw(base_entries("none needed", vec![DDX_FINAL], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    orch.agent_turn(&mut s, Some("My chest hurts.")).unwrap();
    assert_eq!(s.conversation[0].provenance, PROVENANCE_PATIENT);
    assert_eq!(s.conversation[1].provenance, PROVENANCE_PRIMARY);
    orch.agent_turn(&mut s, Some("Left side, since Monday.")).unwrap();
    assert_eq!(s.conversation.len(), 4);
}

#[test]
fn full_session_with_retrieval() {
    let g = gw(base_entries(LIPID_PLAN, vec![DDX_FINAL], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, closing) = drive(&orch, &mut s, |_| "It hurts.".into()).unwrap();

    assert_eq!(
        s.phase_history,
        Phase::ORDER.to_vec(),
        "retrieval runs when the plan is non-empty"
    );
    assert!(is_valid_phase_sequence(&s.phase_history, false));
    assert_eq!(s.data_plan.as_ref().unwrap().requested.len(), 1);
    assert_eq!(s.data_plan.as_ref().unwrap().requested[0].recency, Recency::MostRecent);
    assert_eq!(s.retrieved.len(), 1);
    assert_eq!(s.retrieved[0].value, "LDL 150");
    assert!(s.internal_steps.iter().any(|st| st.agent == agents::HEALTH_DATA_PLANNER
        && st.output.starts_with("confirmed 1 of 1")));

    assert_eq!(a.urgency, UrgencyStatus::SelfCare);
    assert!(!a.escalation_signs.is_empty());
    assert_eq!(a.lab_assessment.as_deref(), Some("lipids fine"));
    assert_eq!(a.medication_assessment, None);
    assert_eq!(a.ddx.candidates.len(), 3);
    assert_eq!(a.case_summary.chief_complaint, "chest pain");
    assert!(a.case_summary.key_negative_findings.contains(&"no fever".to_string()));
    assert!(closing.contains("shortness of breath"));
    assert!(s.socrates.is_complete());
    assert!(!s.budget_exceeded);
    assert!(s.is_done());
    assert!(is_alternating(&s.conversation));
    assert!(s
        .conversation
        .iter()
        .all(|m| m.provenance == if m.role == Role::User { PROVENANCE_PATIENT } else { PROVENANCE_PRIMARY }));
    assert_eq!(s.internal_steps.iter().filter(|x| x.agent == agents::SUMMARY).count(), 1);
    assert_eq!(orch.agent_turn(&mut s, None).unwrap_err(), TriageError::SessionFinished);
    // one event per visible message, step, transition and annotation
    assert_eq!(
        s.events.len(),
        s.conversation.len() + s.internal_steps.len() + s.phase_history.len() + s.annotations.len()
    );
}

#[test]
fn empty_plan_skips_retrieval_and_drops_lab_assessment() {
    let g = gw(base_entries("None needed.", vec![DDX_FINAL], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, _) = drive(&orch, &mut s, |_| "ok".into()).unwrap();
    assert!(!s.phase_history.contains(&Phase::HealthDataRetrieval));
    assert!(is_valid_phase_sequence(&s.phase_history, true));
    assert!(s.retrieved.is_empty());
    assert_eq!(a.lab_assessment, None);
    assert!(a.case_summary.data_highlights.is_empty());
}

#[test]
fn malformed_plan_twice_gives_empty_plan_with_warning() {
    let g = gw(base_entries("I would look at some labs maybe", vec![DDX_FINAL], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    drive(&orch, &mut s, |_| "ok".into()).unwrap();
    assert!(s.data_plan.as_ref().unwrap().is_empty());
    assert!(s.annotations.iter().any(|a| a.starts_with("warning: health_data_planner")));
    assert_eq!(
        s.internal_steps.iter().filter(|x| x.agent == agents::HEALTH_DATA_PLANNER).count(),
        2
    );
}

#[test]
fn premature_sentinel_gets_fallback_question() {
    let mut entries = base_entries("none", vec![DDX_FINAL], SELF_CARE);
    entries.retain(|e| e.matcher.tag.as_deref() != Some(agents::SYMPTOM_COLLECTOR));
    entries.push(ScriptEntry::for_tag(agents::SYMPTOM_COLLECTOR, "Where does it hurt?\nSOCRATES: site").at_turn(0));
    entries.push(ScriptEntry::for_tag(agents::SYMPTOM_COLLECTOR, prompts::SYMPTOM_COLLECTION_COMPLETE));
    let g = gw(entries);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    orch.agent_turn(&mut s, None).unwrap();
    let TurnResult::AskPatient(q) = orch.agent_turn(&mut s, Some("chest")).unwrap() else { panic!() };
    assert_eq!(q, SocratesDimension::Onset.fallback_question());
    assert!(s.annotations[0].contains("signalled completion"));
    drive(&orch, &mut s, |_| "ok".into()).unwrap();
    assert!(s.socrates.is_complete());
    assert!(!s.budget_exceeded);
    assert_eq!(s.symptom_questions, 8);
}

#[test]
fn symptom_budget_forces_transition() {
    let mut entries = base_entries("none", vec![DDX_FINAL], SELF_CARE);
    entries.retain(|e| e.matcher.tag.as_deref() != Some(agents::SYMPTOM_COLLECTOR));
    entries.push(ScriptEntry::for_tag(agents::SYMPTOM_COLLECTOR, "Tell me more?"));
    let g = gw(entries);
    let st = store();
    let config = TriageConfig {
        symptom_question_budget: 3,
        ..TriageConfig::default()
    };
    let orch = Orchestrator::new(&g, &st, config);
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    drive(&orch, &mut s, |_| "ok".into()).unwrap();
    assert_eq!(s.symptom_questions, 3);
    assert!(s.budget_exceeded);
    assert!(s.annotations.iter().any(|a| a.starts_with(BUDGET_EXCEEDED)));
    assert!(!s.socrates.is_complete());
}

#[test]
fn ddx_two_questions_then_ranked_list() {
    let ddx = vec![
        r#"{"question": "Does pressing on your chest hurt?", "rationale": "reproducible tenderness favours wall pain"}"#,
        "Does it get worse after meals?",
        DDX_FINAL,
    ];
    let g = gw(base_entries("none", ddx, SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, _) = drive(&orch, &mut s, |_| "yes".into()).unwrap();
    assert_eq!(a.ddx.candidates.len(), 3);
    assert_eq!(
        a.ddx.reasoning_trace,
        ["reproducible tenderness favours wall pain", "no rationale provided"]
    );
    assert_eq!(s.ddx_questions, 2);
    assert!(is_alternating(&s.conversation));
}

#[test]
fn ddx_duplicates_and_overflow_normalized() {
    let list = "```json\n{\"candidates\": [\"A\", \"b\", \"a\", \"C\", \"D\", \"B \", \"E\", \"F\", \"G\"]}\n```";
    let g = gw(base_entries("none", vec![list], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, _) = drive(&orch, &mut s, |_| "yes".into()).unwrap();
    let names: Vec<_> = a.ddx.top(10).collect();
    assert_eq!(names, ["A", "b", "C", "D", "E"]);
}

#[test]
fn ddx_budget_forces_finalization() {
    let mut entries = base_entries("none", vec![], SELF_CARE);
    entries.insert(
        0,
        ScriptEntry::for_tag(agents::DIFFERENTIAL_DIAGNOSIS, DDX_FINAL).containing(prompts::FINALIZE_NOW),
    );
    entries.push(ScriptEntry::for_tag(agents::DIFFERENTIAL_DIAGNOSIS, "Any cough?"));
    let g = gw(entries);
    let st = store();
    let config = TriageConfig {
        ddx_question_budget: 2,
        ..TriageConfig::default()
    };
    let orch = Orchestrator::new(&g, &st, config);
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, _) = drive(&orch, &mut s, |_| "no".into()).unwrap();
    assert_eq!(s.ddx_questions, 2);
    assert!(s.budget_exceeded);
    assert_eq!(a.ddx.reasoning_trace.len(), 2);
}

#[test]
fn urgent_fixture_needs_no_escalation_signs() {
    let urgent = r#"{"urgency": "Urgent care / emergency", "urgency_reasoning": "possible ACS"}"#;
    let g = gw(base_entries("none", vec![DDX_FINAL], urgent));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, closing) = drive(&orch, &mut s, |_| "ok".into()).unwrap();
    assert_eq!(a.urgency, UrgencyStatus::UrgentOrEmergency);
    assert!(a.escalation_signs.is_empty());
    assert!(closing.contains("emergency department"));
}

#[test]
fn missing_urgency_twice_is_invalid() {
    let g = gw(base_entries("none", vec![DDX_FINAL], r#"{"urgency_reasoning": "unsure"}"#));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let err = drive(&orch, &mut s, |_| "ok".into()).unwrap_err();
    assert!(matches!(err, TriageError::AssessmentInvalid(m) if m.contains("urgency")));
    assert_eq!(s.phase, Phase::NextSteps);
}

#[test]
fn non_urgent_without_signs_is_reprompted() {
    let mut entries = base_entries("none", vec![DDX_FINAL], SELF_CARE);
    entries.insert(
        0,
        ScriptEntry::for_tag(agents::NEXT_STEPS, r#"{"urgency": "follow_up_pcp"}"#).at_turn(0),
    );
    let g = gw(entries);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let (a, _) = drive(&orch, &mut s, |_| "ok".into()).unwrap();
    assert_eq!(a.urgency, UrgencyStatus::SelfCare);
    assert!(s.annotations.iter().any(|n| n.contains("escalation_signs")));
}

#[test]
fn summary_without_chief_complaint_is_invalid() {
    let mut entries = base_entries("none", vec![DDX_FINAL], SELF_CARE);
    entries.insert(0, ScriptEntry::for_tag(agents::SUMMARY, r#"{"chief_complaint": " "}"#));
    let g = gw(entries);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    let err = drive(&orch, &mut s, |_| "ok".into()).unwrap_err();
    assert_eq!(err, TriageError::SummaryInvalid("chief_complaint missing".into()));
}

#[test]
fn operations_check_phase() {
    let g = gw(vec![]);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    assert!(matches!(orch.summarize_case(&mut s), Err(TriageError::WrongPhase { .. })));
    assert!(matches!(orch.plan_health_data(&mut s), Err(TriageError::WrongPhase { .. })));
    assert!(matches!(orch.ddx_turn(&mut s, None), Err(TriageError::WrongPhase { .. })));
}

#[test]
fn script_exhaustion_propagates() {
    let g = gw(vec![ScriptEntry::for_tag(agents::PRIMARY, LATEST_USER_PLACEHOLDER)]);
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    assert!(matches!(
        orch.agent_turn(&mut s, None),
        Err(TriageError::Gateway(GatewayError::ScriptExhausted { .. }))
    ));
}

#[test]
fn unexpected_patient_message_rejected() {
    let g = gw(base_entries(LIPID_PLAN, vec![DDX_FINAL], SELF_CARE));
    let st = store();
    let orch = Orchestrator::new(&g, &st, TriageConfig::default());
    let mut s = orch.start_session("s1", "p1", date("2024-07-01")).unwrap();
    orch.agent_turn(&mut s, None).unwrap();
    orch.agent_turn(&mut s, Some("answer")).unwrap();
    orch.agent_turn(&mut s, Some("answer")).unwrap();
    // collector now signals completion
    assert_eq!(
        orch.agent_turn(&mut s, Some("answer")).unwrap(),
        TurnResult::PhaseAdvanced(Phase::HealthDataPlanning)
    );
    assert_eq!(
        orch.agent_turn(&mut s, Some("hello?")).unwrap_err(),
        TriageError::UnexpectedPatientMessage(Phase::HealthDataPlanning)
    );
}
