//! The clinician review questionnaire and review validation.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::triage::UrgencyStatus;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricOption {
    pub option_id: String,
    pub label: String,
}

/// When a free-text box is shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreeTextTrigger {
    Always,
    /// Shown when any of these options is selected.
    Options { options: Vec<String> },
    /// Shown when the selected urgency levels do not include the system's.
    UrgencyMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextField {
    pub field_id: String,
    pub prompt: String,
    pub trigger: FreeTextTrigger,
    /// Whether a shown box must be filled in.
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricQuestion {
    pub question_id: String,
    pub prompt: String,
    pub options: Vec<RubricOption>,
    pub conditional_free_text: Vec<FreeTextField>,
    pub multi_select: bool,
    /// Option meaning the reviewer agrees with the system output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affirmative_option: Option<String>,
    /// "Not applicable" option, excluded from rate denominators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub na_option: Option<String>,
}

impl RubricQuestion {
    pub fn option(&self, option_id: &str) -> Option<&RubricOption> {
        self.options.iter().find(|o| o.option_id == option_id)
    }

    /// Fields visible for `selected`. `system_urgency` is needed to decide
    /// urgency-mismatch boxes; without it they are treated as hidden.
    pub fn visible_fields<'a>(
        &'a self,
        selected: &[String],
        system_urgency: Option<UrgencyStatus>,
    ) -> Vec<&'a FreeTextField> {
        self.conditional_free_text
            .iter()
            .filter(|f| match &f.trigger {
                FreeTextTrigger::Always => true,
                FreeTextTrigger::Options { options } => selected.iter().any(|s| options.contains(s)),
                FreeTextTrigger::UrgencyMismatch => match system_urgency {
                    Some(u) => !selected.is_empty() && !selected.iter().any(|s| s == u.as_str()),
                    None => false,
                },
            })
            .collect()
    }
}

pub const Q11: &str = "Q11";
pub const Q14: &str = "Q14";
pub const Q14_OTHER: &str = "other";
pub const Q14_OTHER_FIELD: &str = "most_probable_diagnosis";
/// Q14 option ids for the ranked differential, in rank order.
pub const Q14_DIAGNOSIS_OPTIONS: [&str; 5] = ["dx1", "dx2", "dx3", "dx4", "dx5"];

fn opt(id: &str, label: &str) -> RubricOption {
    RubricOption {
        option_id: id.into(),
        label: label.into(),
    }
}

fn on(options: &[&str], field_id: &str, prompt: &str) -> FreeTextField {
    FreeTextField {
        field_id: field_id.into(),
        prompt: prompt.into(),
        trigger: FreeTextTrigger::Options {
            options: options.iter().map(|s| s.to_string()).collect(),
        },
        required: true,
    }
}

fn yes_no(id: &str, prompt: &str, no_label: &str, free_text: &str) -> RubricQuestion {
    RubricQuestion {
        question_id: id.into(),
        prompt: prompt.into(),
        options: vec![opt("yes", "Yes"), opt("no", no_label)],
        conditional_free_text: vec![on(&["no"], "explanation", free_text)],
        multi_select: false,
        affirmative_option: Some("yes".into()),
        na_option: None,
    }
}

fn yes_no_na(id: &str, prompt: &str, no_label: &str, na_label: &str, free_text: &str) -> RubricQuestion {
    let mut q = yes_no(id, prompt, no_label, free_text);
    q.options.push(opt("na", na_label));
    q.na_option = Some("na".into());
    q
}

/// The 14-question review form, worded as clinicians saw it.
pub fn builtin_rubric() -> Vec<RubricQuestion> {
    let elaborate = "Please elaborate";
    let harmful = "No, it contains harmful or misleading information";
    let q4 = RubricQuestion {
        question_id: "Q4".into(),
        prompt: "Are the patient's answers consistent?".into(),
        options: vec![
            opt("yes", "Yes"),
            opt("no_self", "No, the patient sometimes contradicts themself"),
            opt("no_summary", "No, the patient sometimes contradicts the patient summary"),
        ],
        conditional_free_text: vec![on(&["no_self", "no_summary"], "explanation", "Please Explain")],
        multi_select: false,
        affirmative_option: Some("yes".into()),
        na_option: None,
    };
    let mut q10 = yes_no(
        "Q10",
        "Is the reasoning in the Urgency Assessment correct?",
        "No",
        "Please explain what is incorrect, if anything",
    );
    // shown for either answer, but only a "No" has to be explained
    q10.conditional_free_text = vec![
        FreeTextField {
            field_id: "explanation".into(),
            prompt: "Please explain what is incorrect, if anything".into(),
            trigger: FreeTextTrigger::Options {
                options: vec!["no".into()],
            },
            required: true,
        },
        FreeTextField {
            field_id: "comment".into(),
            prompt: "Please explain what is incorrect, if anything".into(),
            trigger: FreeTextTrigger::Options {
                options: vec!["yes".into()],
            },
            required: false,
        },
    ];
    vec![
        yes_no(
            "Q1",
            "Do the questions cover all important symptoms and related information?",
            "No, key information is missing",
            "What key information was missing / not covered?",
        ),
        yes_no(
            "Q2",
            "Are questions precise and without redundancy?",
            "No, it contains irrelevant or repeated questions",
            "Please Explain",
        ),
        yes_no(
            "Q3",
            "Does the doctor use an appropriate and empathetic tone with the patient during the conversation?",
            "No, Doctor's tone is sometimes inappropriate, rude, or not empathetic",
            "Please provide examples from the conversation",
        ),
        q4,
        yes_no_na(
            "Q5",
            "Does the list of requested historical EHR Data contain all necessary information for diagnosis?",
            "No",
            "N/A (if list is empty)",
            "What key information was missing / not covered?",
        ),
        yes_no(
            "Q6",
            "Does the Case Summary capture the chief complaint and key information necessary (positive signs and important negative signs) for diagnosis?",
            "No",
            "What important information was missing?",
        ),
        yes_no_na(
            "Q7",
            "Does the Laboratory Assessment make accurate inferences about the patient’s condition?",
            "No, inference about some labs are incorrect",
            "N/A (if no labs are available)",
            elaborate,
        ),
        yes_no_na(
            "Q8",
            "Does the Medication Assessment make accurate inferences about the patient's condition?",
            "No, inference about some meds are incorrect",
            "N/A (if no meds are available)",
            elaborate,
        ),
        yes_no(
            "Q9",
            "Does the Overall Assessment draw accurate conclusions based on the conversation and provided EHR?",
            "No, the conclusion is inaccurate",
            elaborate,
        ),
        q10,
        RubricQuestion {
            question_id: Q11.into(),
            prompt: "What is the correct Urgency Status? (Select multiple if applicable)".into(),
            options: UrgencyStatus::ALL.iter().map(|u| opt(u.as_str(), u.label())).collect(),
            conditional_free_text: vec![FreeTextField {
                field_id: "reasoning".into(),
                prompt: "If your selection does not match the provided 'Urgency Status', please give your reasoning"
                    .into(),
                trigger: FreeTextTrigger::UrgencyMismatch,
                required: true,
            }],
            multi_select: true,
            affirmative_option: None,
            na_option: None,
        },
        yes_no(
            "Q12",
            "Does the 'when to escalate?' help patient understanding urgency and when to take additional steps?",
            harmful,
            elaborate,
        ),
        yes_no(
            "Q13",
            "Are the 'Care Recommendations' helpful based on the patient condition?",
            harmful,
            elaborate,
        ),
        RubricQuestion {
            question_id: Q14.into(),
            prompt: "Please select the most probable diagnosis (choose multiple if more than 1 are equally likely given the available information).".into(),
            options: Q14_DIAGNOSIS_OPTIONS
                .iter()
                .enumerate()
                .map(|(i, id)| opt(id, &format!("Diagnosis {}", i + 1)))
                .chain([opt(Q14_OTHER, "Other (Not Listed)")])
                .collect(),
            conditional_free_text: vec![
                on(
                    &[Q14_OTHER],
                    Q14_OTHER_FIELD,
                    "Enter most probable diagnosis here. If multiple diagnosis missing, provide comma separated list - e.g., 'Flu, Covid'.",
                ),
                FreeTextField {
                    field_id: "diagnosis_comments".into(),
                    prompt: "Provide any comments on diagnosis here:".into(),
                    trigger: FreeTextTrigger::Always,
                    required: false,
                },
            ],
            multi_select: true,
            affirmative_option: None,
            na_option: None,
        },
    ]
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub free_text: BTreeMap<String, String>,
}

impl Answer {
    pub fn select(options: &[&str]) -> Self {
        Self {
            selected: options.iter().map(|s| s.to_string()).collect(),
            free_text: BTreeMap::new(),
        }
    }

    pub fn with_text(mut self, field_id: &str, text: &str) -> Self {
        self.free_text.insert(field_id.into(), text.into());
        self
    }

    pub fn text(&self, field_id: &str) -> Option<&str> {
        self.free_text.get(field_id).map(|s| s.trim()).filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewResponse {
    pub encounter_id: String,
    pub reviewer_id: String,
    pub answers: BTreeMap<String, Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_comments: Option<String>,
    pub submitted_at: DateTime<Utc>,
}

impl ReviewResponse {
    pub fn answer(&self, question_id: &str) -> Option<&Answer> {
        self.answers.get(question_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    BlankField,
    Unanswered,
    UnknownQuestion,
    UnknownOption,
    DuplicateSelection,
    MultipleSelection,
    UnknownFreeTextField,
    MissingFreeText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub question_id: String,
    pub rule: ViolationRule,
    pub detail: String,
}

fn violation(question_id: &str, rule: ViolationRule, detail: String) -> Violation {
    Violation {
        question_id: question_id.into(),
        rule,
        detail,
    }
}

/// Checks a review against the rubric, skipping the urgency-mismatch rule
/// that needs the system's urgency.
pub fn validate_review(review: &ReviewResponse, rubric: &[RubricQuestion]) -> Result<(), Vec<Violation>> {
    validate_review_with(review, rubric, None)
}

/// Full check; `system_urgency` is the urgency the reviewer was shown.
pub fn validate_review_with(
    review: &ReviewResponse,
    rubric: &[RubricQuestion],
    system_urgency: Option<UrgencyStatus>,
) -> Result<(), Vec<Violation>> {
    use ViolationRule::*;
    let mut out = Vec::new();
    if review.encounter_id.trim().is_empty() {
        out.push(violation("review", BlankField, "encounter_id is blank".into()));
    }
    if review.reviewer_id.trim().is_empty() {
        out.push(violation("review", BlankField, "reviewer_id is blank".into()));
    }
    for qid in review.answers.keys() {
        if !rubric.iter().any(|q| &q.question_id == qid) {
            out.push(violation(qid, UnknownQuestion, format!("{qid} is not in the rubric")));
        }
    }
    for q in rubric {
        let qid = q.question_id.as_str();
        let Some(answer) = review.answers.get(qid).filter(|a| !a.selected.is_empty()) else {
            out.push(violation(qid, Unanswered, "no option selected".into()));
            continue;
        };
        let mut seen = BTreeSet::new();
        for s in &answer.selected {
            if q.option(s).is_none() {
                out.push(violation(qid, UnknownOption, format!("unknown option {s:?}")));
            } else if !seen.insert(s) {
                out.push(violation(qid, DuplicateSelection, format!("{s:?} selected twice")));
            }
        }
        if !q.multi_select && answer.selected.len() > 1 {
            out.push(violation(qid, MultipleSelection, "only one option may be selected".into()));
        }
        for field in answer.free_text.keys() {
            if !q.conditional_free_text.iter().any(|f| &f.field_id == field) {
                out.push(violation(qid, UnknownFreeTextField, format!("unknown free-text field {field:?}")));
            }
        }
        for f in q.visible_fields(&answer.selected, system_urgency) {
            if f.required && answer.text(&f.field_id).is_none() {
                out.push(violation(qid, MissingFreeText, format!("{} requires {:?}", qid, f.field_id)));
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
