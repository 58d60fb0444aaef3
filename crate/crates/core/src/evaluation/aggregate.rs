//! Cross-review analytics: dual-confirmation rates, top-3 hits, urgency
//! agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::kappa::{cohens_kappa, multi_select_to_label};
use super::rubric::{
    builtin_rubric, validate_review, ReviewResponse, RubricQuestion, Violation, Q11, Q14, Q14_DIAGNOSIS_OPTIONS,
    Q14_OTHER, Q14_OTHER_FIELD,
};
use crate::triage::UrgencyStatus;

/// What the analytics need to know about one encounter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncounterOutcome {
    pub encounter_id: String,
    /// Urgency shown to reviewers (after the guideline pass).
    pub final_urgency: Option<UrgencyStatus>,
    /// Ranked differential, most likely first.
    pub ddx_candidates: Vec<String>,
}

/// True when the reviewer picked one of the top three diagnoses, or wrote
/// one of their names under "Other".
pub fn top3_hit(review: &ReviewResponse, ddx_candidates: &[String]) -> bool {
    let Some(answer) = review.answer(Q14) else {
        return false;
    };
    let top3: Vec<String> = ddx_candidates.iter().take(3).map(|c| c.trim().to_lowercase()).collect();
    answer.selected.iter().any(|s| {
        if Q14_DIAGNOSIS_OPTIONS[..3].contains(&s.as_str()) {
            return true;
        }
        if s != Q14_OTHER {
            return false;
        }
        let Some(text) = answer.text(Q14_OTHER_FIELD) else {
            return false;
        };
        std::iter::once(text)
            .chain(text.split(','))
            .map(|t| t.trim().to_lowercase())
            .any(|t| top3.contains(&t))
    })
}

/// Reviewer's Q11 answer reduced to one level.
pub fn reviewer_urgency(review: &ReviewResponse) -> Option<UrgencyStatus> {
    let selected: Vec<UrgencyStatus> = review
        .answer(Q11)?
        .selected
        .iter()
        .filter_map(|s| UrgencyStatus::ALL.into_iter().find(|u| u.as_str() == s))
        .collect();
    multi_select_to_label(&selected).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRate {
    pub question_id: String,
    pub confirmed: usize,
    pub denominator: usize,
    /// `None` when nothing counts toward the denominator.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerTop3 {
    pub reviewer_id: String,
    pub hits: usize,
    pub reviewed: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KappaTriple {
    pub model_vs_reviewer1: Option<f64>,
    pub model_vs_reviewer2: Option<f64>,
    pub reviewer1_vs_reviewer2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_encounters: usize,
    pub n_reviews: usize,
    pub reviewers: Vec<String>,
    /// Encounters reviewed by both reviewers.
    pub n_dual_reviewed: usize,
    pub question_rates: Vec<QuestionRate>,
    pub simulator_consistency_rate: Option<f64>,
    pub precision_rate: Option<f64>,
    pub tone_rate: Option<f64>,
    pub summary_rate: Option<f64>,
    pub top3: Vec<ReviewerTop3>,
    pub kappa: KappaTriple,
    /// Which model urgency the model-vs-reviewer kappas compare against.
    pub model_label_source: String,
}

pub const MODEL_LABEL_SOURCE: &str = "final_urgency_after_guideline_check";

impl AggregateReport {
    pub fn rate(&self, question_id: &str) -> Option<&QuestionRate> {
        self.question_rates.iter().find(|q| q.question_id == question_id)
    }

    pub fn render_table(&self) -> String {
        let pct = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{:.1}%", r * 100.0));
        let k = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{r:.3}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Encounters: {}  Reviews: {}  Dual-reviewed: {}",
            self.n_encounters, self.n_reviews, self.n_dual_reviewed
        );
        let _ = writeln!(out, "\n{:<9}{:>10}{:>12}{:>9}", "Question", "Confirmed", "Denominator", "Rate");
        for q in &self.question_rates {
            let _ = writeln!(out, "{:<9}{:>10}{:>12}{:>9}", q.question_id, q.confirmed, q.denominator, pct(q.rate));
        }
        let _ = writeln!(out, "\nSimulator consistency (Q4): {}", pct(self.simulator_consistency_rate));
        let _ = writeln!(out, "Precise, non-redundant questions (Q2): {}", pct(self.precision_rate));
        let _ = writeln!(out, "Appropriate tone (Q3): {}", pct(self.tone_rate));
        let _ = writeln!(out, "Case summary (Q6): {}", pct(self.summary_rate));
        let _ = writeln!(out, "\nMost probable diagnosis in top 3:");
        for t in &self.top3 {
            let _ = writeln!(out, "  {}: {} ({}/{})", t.reviewer_id, pct(t.rate), t.hits, t.reviewed);
        }
        let r = |i: usize| self.reviewers.get(i).map_or("-", String::as_str);
        let _ = writeln!(out, "\nUrgency agreement (Cohen's kappa, model label: {}):", self.model_label_source);
        let _ = writeln!(out, "  model vs {}: {}", r(0), k(self.kappa.model_vs_reviewer1));
        let _ = writeln!(out, "  model vs {}: {}", r(1), k(self.kappa.model_vs_reviewer2));
        let _ = writeln!(out, "  {} vs {}: {}", r(0), r(1), k(self.kappa.reviewer1_vs_reviewer2));
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("reviews reference unknown encounters: {0:?}")]
    UnknownEncounters(Vec<String>),
    #[error("more than one review of {encounter_id} by {reviewer_id}")]
    DuplicateReview { encounter_id: String, reviewer_id: String },
    #[error("at most two reviewers are supported, found {0:?}")]
    TooManyReviewers(Vec<String>),
    #[error("review of {encounter_id} by {reviewer_id} is invalid ({} violations)", violations.len())]
    InvalidReview {
        encounter_id: String,
        reviewer_id: String,
        violations: Vec<Violation>,
    },
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn aggregate(reviews: &[ReviewResponse], outcomes: &[EncounterOutcome]) -> Result<AggregateReport, AggregateError> {
    aggregate_with(reviews, outcomes, &builtin_rubric())
}

pub fn aggregate_with(
    reviews: &[ReviewResponse],
    outcomes: &[EncounterOutcome],
    rubric: &[RubricQuestion],
) -> Result<AggregateReport, AggregateError> {
    let by_id: HashMap<&str, &EncounterOutcome> = outcomes.iter().map(|o| (o.encounter_id.as_str(), o)).collect();
    let unknown: BTreeSet<String> = reviews
        .iter()
        .filter(|r| !by_id.contains_key(r.encounter_id.as_str()))
        .map(|r| r.encounter_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(AggregateError::UnknownEncounters(unknown.into_iter().collect()));
    }
    let reviewers: Vec<String> = reviews
        .iter()
        .map(|r| r.reviewer_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if reviewers.len() > 2 {
        return Err(AggregateError::TooManyReviewers(reviewers));
    }
    // encounter -> reviewer index -> review
    let mut grid: BTreeMap<&str, [Option<&ReviewResponse>; 2]> = BTreeMap::new();
    for r in reviews {
        if let Err(violations) = validate_review(r, rubric) {
            return Err(AggregateError::InvalidReview {
                encounter_id: r.encounter_id.clone(),
                reviewer_id: r.reviewer_id.clone(),
                violations,
            });
        }
        let idx = reviewers.iter().position(|x| x == &r.reviewer_id).expect("reviewer listed");
        let slot = &mut grid.entry(r.encounter_id.as_str()).or_default()[idx];
        if slot.is_some() {
            return Err(AggregateError::DuplicateReview {
                encounter_id: r.encounter_id.clone(),
                reviewer_id: r.reviewer_id.clone(),
            });
        }
        *slot = Some(r);
    }
    let dual: Vec<(&str, &ReviewResponse, &ReviewResponse)> = grid
        .iter()
        .filter_map(|(e, [a, b])| Some((*e, (*a)?, (*b)?)))
        .collect();

    let question_rates: Vec<QuestionRate> = rubric
        .iter()
        .filter_map(|q| {
            let yes = q.affirmative_option.as_deref()?;
            let picked = |r: &ReviewResponse, opt: &str| r.answer(&q.question_id).is_some_and(|a| a.selected.iter().any(|s| s == opt));
            let counted: Vec<_> = dual
                .iter()
                .filter(|(_, a, b)| q.na_option.as_deref().is_none_or(|na| !picked(a, na) && !picked(b, na)))
                .collect();
            let confirmed = counted.iter().filter(|(_, a, b)| picked(a, yes) && picked(b, yes)).count();
            Some(QuestionRate {
                question_id: q.question_id.clone(),
                confirmed,
                denominator: counted.len(),
                rate: ratio(confirmed, counted.len()),
            })
        })
        .collect();
    let named = |id: &str| question_rates.iter().find(|q| q.question_id == id).and_then(|q| q.rate);

    let top3 = reviewers
        .iter()
        .enumerate()
        .map(|(i, rid)| {
            let mine: Vec<_> = grid.iter().filter_map(|(e, slots)| slots[i].map(|r| (*e, r))).collect();
            let hits = mine
                .iter()
                .filter(|(e, r)| top3_hit(r, &by_id[e].ddx_candidates))
                .count();
            ReviewerTop3 {
                reviewer_id: rid.clone(),
                hits,
                reviewed: mine.len(),
                rate: ratio(hits, mine.len()),
            }
        })
        .collect();

    let model_vs = |i: usize| -> Option<f64> {
        let (m, r): (Vec<_>, Vec<_>) = grid
            .iter()
            .filter_map(|(e, slots)| Some((by_id[e].final_urgency?, reviewer_urgency(slots[i]?)?)))
            .unzip();
        cohens_kappa(&m, &r).ok()?.value()
    };
    let between = || -> Option<f64> {
        let (a, b): (Vec<_>, Vec<_>) = dual
            .iter()
            .filter_map(|(_, a, b)| Some((reviewer_urgency(a)?, reviewer_urgency(b)?)))
            .unzip();
        cohens_kappa(&a, &b).ok()?.value()
    };
    let kappa = KappaTriple {
        model_vs_reviewer1: model_vs(0),
        model_vs_reviewer2: if reviewers.len() > 1 { model_vs(1) } else { None },
        reviewer1_vs_reviewer2: between(),
    };

    Ok(AggregateReport {
        n_encounters: outcomes.len(),
        n_reviews: reviews.len(),
        n_dual_reviewed: dual.len(),
        simulator_consistency_rate: named("Q4"),
        precision_rate: named("Q2"),
        tone_rate: named("Q3"),
        summary_rate: named("Q6"),
        reviewers,
        question_rates,
        top3,
        kappa,
        model_label_source: MODEL_LABEL_SOURCE.to_string(),
    })
}
