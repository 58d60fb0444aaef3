//! Cohen's kappa and the Q11 multi-select reduction.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::triage::UrgencyStatus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kappa {
    Defined(f64),
    /// Both raters used one and the same category throughout, so chance
    /// agreement is 1 and kappa has no value.
    Undefined,
}

impl Kappa {
    pub fn value(self) -> Option<f64> {
        match self {
            Kappa::Defined(v) => Some(v),
            Kappa::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KappaError {
    #[error("label lists are empty")]
    Empty,
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Computed from integer counts: κ = (n·agree − Σ a_c·b_c) / (n² − Σ a_c·b_c).
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<Kappa, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(KappaError::Empty);
    }
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let mut counts: HashMap<&T, (u128, u128)> = HashMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for y in b {
        counts.entry(y).or_default().1 += 1;
    }
    let chance: u128 = counts.values().map(|(ca, cb)| ca * cb).sum();
    let total = n * n;
    if chance == total {
        return Ok(Kappa::Undefined);
    }
    let num = (n * agree) as f64 - chance as f64;
    Ok(Kappa::Defined(num / (total - chance) as f64))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("urgency selection is empty")]
pub struct EmptySelection;

/// Collapses a multi-selection to its most urgent level.
pub fn multi_select_to_label(selected: &[UrgencyStatus]) -> Result<UrgencyStatus, EmptySelection> {
    selected.iter().copied().max().ok_or(EmptySelection)
}
