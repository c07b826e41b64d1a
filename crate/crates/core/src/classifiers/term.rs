//! Multinomial naive Bayes over a term vocabulary.
//!
//! Each training user contributes one document: the multiset of their
//! extracted terms restricted to the local-term vocabulary. Classification
//! works in the log domain; posteriors normalize to 1 within 1e-9.
//!
//! The vote weight is the classification strength: 1 divided by the number
//! of labels whose training users contributed at least one of the input
//! user's in-vocabulary terms. A user with no in-vocabulary terms gets no
//! prediction at all.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Gazetteer, Granularity, LocationTaxonomy, UserRecord};
use crate::features::{namespaced, user_terms, StopwordList, TermFamily};

use super::{argmax_lexicographic, normalize_log_scores, ClassOutcome, Prediction, TrainError};

/// Where a term model's vocabulary comes from: a single term family, or the
/// union of all three with family-prefixed terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VocabSource {
    Family(TermFamily),
    UnionOfFamilies,
}

impl VocabSource {
    pub fn key(self) -> &'static str {
        match self {
            VocabSource::Family(f) => f.key(),
            VocabSource::UnionOfFamilies => "single",
        }
    }

    /// Extracts a user's terms in this vocabulary's namespace.
    pub fn terms_for_user(
        self,
        user: &UserRecord,
        stopwords: &StopwordList,
        gazetteer: &Gazetteer,
    ) -> Vec<String> {
        match self {
            VocabSource::Family(f) => user_terms(user, f, stopwords, gazetteer),
            VocabSource::UnionOfFamilies => {
                let mut terms = Vec::new();
                for f in TermFamily::ALL {
                    terms.extend(
                        user_terms(user, f, stopwords, gazetteer)
                            .into_iter()
                            .map(|t| namespaced(f, &t)),
                    );
                }
                terms
            }
        }
    }
}

/// A trained multinomial naive Bayes model. Raw counts are stored so the
/// serialized form is exact; likelihoods are derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermModel {
    pub source: VocabSource,
    pub granularity: Granularity,
    /// Sorted, distinct labels present in the training data.
    pub labels: Vec<String>,
    /// Sorted, distinct vocabulary terms.
    pub vocabulary: Vec<String>,
    /// Additive smoothing constant, strictly positive.
    pub alpha: f64,
    /// Training users per label; priors are these over their sum.
    pub label_user_counts: Vec<u32>,
    /// Token counts per label over the vocabulary: `[label][term]`.
    pub token_counts: Vec<Vec<u64>>,
    /// Row sums of `token_counts`.
    pub label_token_totals: Vec<u64>,
}

impl TermModel {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.vocabulary
            .binary_search_by(|t| t.as_str().cmp(term))
            .ok()
    }

    /// Prior probability of each label, proportional to training user counts.
    pub fn priors(&self) -> Vec<f64> {
        let total: u32 = self.label_user_counts.iter().sum();
        self.label_user_counts
            .iter()
            .map(|&c| f64::from(c) / f64::from(total))
            .collect()
    }

    /// Smoothed log-likelihood of one vocabulary term under one label.
    fn log_likelihood(&self, label_idx: usize, term_idx: usize) -> f64 {
        let num = self.token_counts[label_idx][term_idx] as f64 + self.alpha;
        let den =
            self.label_token_totals[label_idx] as f64 + self.alpha * self.vocabulary.len() as f64;
        (num / den).ln()
    }

    /// In-vocabulary term counts for an input multiset.
    fn vocab_counts(&self, terms: &[String]) -> BTreeMap<usize, u64> {
        let mut counts = BTreeMap::new();
        for t in terms {
            if let Some(idx) = self.term_index(t) {
                *counts.entry(idx).or_default() += 1;
            }
        }
        counts
    }

    fn log_scores(&self, counts: &BTreeMap<usize, u64>) -> Vec<f64> {
        let priors = self.priors();
        (0..self.labels.len())
            .map(|l| {
                let mut score = priors[l].ln();
                for (&t, &c) in counts {
                    score += c as f64 * self.log_likelihood(l, t);
                }
                score
            })
            .collect()
    }

    /// Normalized posterior over labels for an input term multiset, or
    /// `None` when no input term is in the vocabulary.
    pub fn posterior(&self, terms: &[String]) -> Option<Vec<f64>> {
        let counts = self.vocab_counts(terms);
        if counts.is_empty() {
            return None;
        }
        Some(normalize_log_scores(&self.log_scores(&counts)))
    }

    /// Labels whose training users contributed at least one of the given
    /// in-vocabulary terms.
    fn matching_labels(&self, counts: &BTreeMap<usize, u64>) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&l| counts.keys().any(|&t| self.token_counts[l][t] > 0))
            .collect()
    }
}

/// Trains a multinomial NB model with one document per labeled user.
#[allow(clippy::too_many_arguments)]
pub fn train_term_model(
    users: &[UserRecord],
    source: VocabSource,
    granularity: Granularity,
    local_terms: &BTreeSet<String>,
    taxonomy: &LocationTaxonomy,
    gazetteer: &Gazetteer,
    stopwords: &StopwordList,
    alpha: f64,
) -> Result<TermModel, TrainError> {
    if users.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if local_terms.is_empty() {
        return Err(TrainError::EmptyVocabulary);
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(TrainError::InvalidAlpha(alpha));
    }
    let vocabulary: Vec<String> = local_terms.iter().cloned().collect();
    let term_index: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let mut label_of_user = Vec::with_capacity(users.len());
    let mut label_set = BTreeSet::new();
    for user in users {
        let home = user
            .home_label
            .as_deref()
            .ok_or_else(|| TrainError::UnlabeledUser(user.user_id.clone()))?;
        let label = taxonomy
            .project(home, granularity)
            .ok_or_else(|| TrainError::UnknownLabel(user.user_id.clone()))?;
        label_set.insert(label.clone());
        label_of_user.push(label);
    }
    let labels: Vec<String> = label_set.into_iter().collect();
    let label_index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut label_user_counts = vec![0u32; labels.len()];
    let mut token_counts = vec![vec![0u64; vocabulary.len()]; labels.len()];
    for (user, label) in users.iter().zip(&label_of_user) {
        let l = label_index[label.as_str()];
        label_user_counts[l] += 1;
        for term in source.terms_for_user(user, stopwords, gazetteer) {
            if let Some(&t) = term_index.get(term.as_str()) {
                token_counts[l][t] += 1;
            }
        }
    }
    let label_token_totals = token_counts.iter().map(|row| row.iter().sum()).collect();
    Ok(TermModel {
        source,
        granularity,
        labels,
        vocabulary,
        alpha,
        label_user_counts,
        token_counts,
        label_token_totals,
    })
}

/// Classifies a term multiset. Abstains when no term is in the vocabulary
/// or no label's training users contributed any of the matched terms.
pub fn classify_term_model(model: &TermModel, terms: &[String]) -> Option<ClassOutcome> {
    let counts = model.vocab_counts(terms);
    if counts.is_empty() {
        return None;
    }
    let matching = model.matching_labels(&counts);
    if matching.is_empty() {
        return None;
    }
    let scores = model.log_scores(&counts);
    let best = argmax_lexicographic(&scores);
    let weight = 1.0 / matching.len() as f64;
    Some(ClassOutcome {
        prediction: Prediction {
            label: model.labels[best].clone(),
            weight,
            source: model.source.key().to_string(),
        },
        matching: matching.len(),
    })
}
