//! Clinician review form, review validation, and agreement analytics.

mod aggregate;
mod kappa;
mod rubric;

pub use aggregate::*;
pub use kappa::*;
pub use rubric::*;
