//! The individual location classifiers.
//!
//! Three kinds of base classifier feed the ensemble layer:
//! - statistical term models (multinomial naive Bayes over a term family),
//! - heuristic classifiers (place mentions, check-in visit history),
//! - the behavior classifier (Gaussian naive Bayes over posting-time slots).
//!
//! Every classifier either abstains (`None`) or emits a `Prediction` whose
//! weight reflects how exclusively the evidence points at the answer.

mod behavior;
mod heuristic;
mod term;

pub use behavior::{
    activity_vector, classify_behavior, train_behavior_model, BehaviorModel, VARIANCE_FLOOR,
};
pub use heuristic::{
    classify_local_place, classify_visit_history, HeuristicError, PreResolvedVenues,
    VenueResolver, VisitHistory,
};
pub use term::{classify_term_model, train_term_model, TermModel, VocabSource};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single classifier's answer: label, non-negative vote weight, and the
/// id of the classifier that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub weight: f64,
    pub source: String,
}

/// A prediction plus the size of the matching location set that set its
/// weight. `prediction.weight * matching as f64 == 1.0` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassOutcome {
    pub prediction: Prediction,
    pub matching: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("smoothing constant must be positive (got {0})")]
    InvalidAlpha(f64),
    #[error("user '{0}' has no home label")]
    UnlabeledUser(String),
    #[error("user '{0}' has a home label missing from the taxonomy")]
    UnknownLabel(String),
    #[error("user '{0}' has no messages")]
    EmptyUser(String),
    #[error("slot size {0} does not divide the 1440-minute day evenly")]
    InvalidSlotMinutes(u32),
    #[error("time zone '{0}' has no training users")]
    EmptyZone(String),
}

/// Scans labels in ascending order and returns the index of the maximum
/// score; exact ties resolve to the earliest (lexicographically smallest)
/// label. Assumes `scores` is non-empty.
pub(crate) fn argmax_lexicographic(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Log-domain normalization: exponentiates and rescales so the result sums
/// to 1 within 1e-9.
pub(crate) fn normalize_log_scores(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}
