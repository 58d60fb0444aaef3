//! Clinician review analytics: validating review forms, then dual-confirmation
//! rates, top-3 hits and Cohen's kappa across two reviewers.

use std::collections::BTreeMap;

use chrono::Utc;
use triage_forge::evaluation::{
    aggregate, builtin_rubric, cohens_kappa, validate_review, Answer, EncounterOutcome, ReviewResponse, Q11, Q14,
};
use triage_forge::triage::UrgencyStatus;

fn review(encounter: usize, reviewer: &str, urgency: &str, dx: &str, q2_ok: bool) -> ReviewResponse {
    let mut answers: BTreeMap<String, Answer> = builtin_rubric()
        .iter()
        .filter_map(|q| q.affirmative_option.as_deref().map(|a| (q.question_id.clone(), Answer::select(&[a]))))
        .collect();
    if !q2_ok {
        answers.insert("Q2".into(), Answer::select(&["no"]).with_text("explanation", "asked about fever twice"));
    }
    answers.insert(Q11.into(), Answer::select(&[urgency]));
    answers.insert(Q14.into(), Answer::select(&[dx]));
    ReviewResponse {
        encounter_id: format!("enc-{encounter}"),
        reviewer_id: reviewer.into(),
        answers,
        general_comments: None,
        submitted_at: Utc::now(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let urgencies = ["self_care", "follow_up_pcp", "urgent_or_emergency"];
    let outcomes: Vec<EncounterOutcome> = (0..6)
        .map(|i| EncounterOutcome {
            encounter_id: format!("enc-{i}"),
            final_urgency: Some(UrgencyStatus::ALL[i % 3]),
            ddx_candidates: vec!["A".into(), "B".into(), "C".into(), "D".into()],
        })
        .collect();
    let mut reviews = Vec::new();
    for i in 0..6 {
        reviews.push(review(i, "dr-a", urgencies[i % 3], "dx1", i != 4));
        let b_urgency = if i == 5 { "follow_up_pcp" } else { urgencies[i % 3] };
        reviews.push(review(i, "dr-b", b_urgency, if i == 3 { "dx4" } else { "dx2" }, true));
    }

    let mut broken = reviews[0].clone();
    broken.answers.insert("Q5".into(), Answer::select(&["no"]));
    match validate_review(&broken, &builtin_rubric()) {
        Ok(()) => println!("unexpectedly valid"),
        Err(v) => println!("rejected review: {} {:?} ({})\n", v[0].question_id, v[0].rule, v[0].detail),
    }

    let report = aggregate(&reviews, &outcomes)?;
    print!("{}", report.render_table());

    let labels = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let k = cohens_kappa(&labels(&["a", "a", "b", "b"]), &labels(&["a", "b", "b", "b"]))?;
    println!("\nkappa on a toy pair: {:?}", k.value());
    Ok(())
}
