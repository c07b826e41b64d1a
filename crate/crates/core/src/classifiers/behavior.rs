//! Time-zone classification from posting-time behavior.
//!
//! Each user becomes a normalized activity vector over fixed UTC
//! minute-of-day slots. Slots are weighted by how much the per-zone mean
//! volumes disagree (population standard deviation across zones), then a
//! per-slot Gaussian naive Bayes model is fit on the weighted vectors.

use std::collections::BTreeMap;

use chrono::Timelike;
use serde::{Deserialize, Serialize};

use crate::corpus::{Granularity, LocationTaxonomy, UserRecord};

use super::{argmax_lexicographic, normalize_log_scores, ClassOutcome, Prediction, TrainError};

/// Lower bound applied to every per-slot variance so densities stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-9;

const MINUTES_PER_DAY: u32 = 1440;

/// Fraction of a user's messages falling into each UTC minute-of-day slot.
/// `None` when the user has no messages.
pub fn activity_vector(user: &UserRecord, slot_minutes: u32) -> Option<Vec<f64>> {
    debug_assert!(slot_minutes > 0 && MINUTES_PER_DAY % slot_minutes == 0);
    if user.messages.is_empty() {
        return None;
    }
    let slots = (MINUTES_PER_DAY / slot_minutes) as usize;
    let mut counts = vec![0u32; slots];
    for m in &user.messages {
        let minute = m.created_at.hour() * 60 + m.created_at.minute();
        counts[(minute / slot_minutes) as usize] += 1;
    }
    let total = user.messages.len() as f64;
    Some(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Gaussian naive Bayes over slot-weighted activity vectors. Means and
/// variances are statistics of the weighted features, so incoming vectors
/// must be weighted the same way before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    pub slot_minutes: u32,
    /// Sorted zone labels; one per taxonomy time zone.
    pub classes: Vec<String>,
    pub class_user_counts: Vec<u32>,
    pub slot_weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl BehaviorModel {
    pub fn priors(&self) -> Vec<f64> {
        let total: u32 = self.class_user_counts.iter().sum();
        self.class_user_counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect()
    }

    /// Normalized class posterior for a user, `None` without messages.
    pub fn posterior(&self, user: &UserRecord) -> Option<Vec<f64>> {
        let x = activity_vector(user, self.slot_minutes)?;
        let priors = self.priors();
        let scores: Vec<f64> = (0..self.classes.len())
            .map(|c| {
                let mut s = priors[c].ln();
                for (slot, &xs) in x.iter().enumerate() {
                    let v = xs * self.slot_weights[slot];
                    let mean = self.means[c][slot];
                    let var = self.variances[c][slot];
                    s += -0.5 * (std::f64::consts::TAU * var).ln()
                        - (v - mean) * (v - mean) / (2.0 * var);
                }
                s
            })
            .collect();
        Some(normalize_log_scores(&scores))
    }
}

fn pop_variance(values: &[f64], mean: f64) -> f64 {
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

/// Fits the behavior model on labeled users. Classes are the taxonomy's
/// distinct time zones; every zone must have at least one training user.
pub fn train_behavior_model(
    users: &[UserRecord],
    taxonomy: &LocationTaxonomy,
    slot_minutes: u32,
) -> Result<BehaviorModel, TrainError> {
    if slot_minutes == 0 || MINUTES_PER_DAY % slot_minutes != 0 {
        return Err(TrainError::InvalidSlotMinutes(slot_minutes));
    }
    if users.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let classes: Vec<String> = taxonomy.labels_at(Granularity::TimeZone).into_iter().collect();
    let class_index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let slots = (MINUTES_PER_DAY / slot_minutes) as usize;
    let mut per_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); classes.len()];
    for user in users {
        let home = user
            .home_label
            .as_deref()
            .ok_or_else(|| TrainError::UnlabeledUser(user.user_id.clone()))?;
        let zone = taxonomy
            .project(home, Granularity::TimeZone)
            .ok_or_else(|| TrainError::UnknownLabel(home.to_string()))?;
        let vector = activity_vector(user, slot_minutes)
            .ok_or_else(|| TrainError::EmptyUser(user.user_id.clone()))?;
        per_class[class_index[zone.as_str()]].push(vector);
    }
    for (c, members) in per_class.iter().enumerate() {
        if members.is_empty() {
            return Err(TrainError::EmptyZone(classes[c].clone()));
        }
    }

    let class_means: Vec<Vec<f64>> = per_class
        .iter()
        .map(|members| {
            (0..slots)
                .map(|s| members.iter().map(|v| v[s]).sum::<f64>() / members.len() as f64)
                .collect()
        })
        .collect();
    let slot_weights: Vec<f64> = (0..slots)
        .map(|s| {
            let col: Vec<f64> = class_means.iter().map(|m| m[s]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            pop_variance(&col, mean).sqrt()
        })
        .collect();

    let mut means = Vec::with_capacity(classes.len());
    let mut variances = Vec::with_capacity(classes.len());
    for members in &per_class {
        let weighted: Vec<Vec<f64>> = members
            .iter()
            .map(|v| v.iter().zip(&slot_weights).map(|(x, w)| x * w).collect())
            .collect();
        let mut m = Vec::with_capacity(slots);
        let mut var = Vec::with_capacity(slots);
        for s in 0..slots {
            let col: Vec<f64> = weighted.iter().map(|v| v[s]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            m.push(mean);
            var.push(pop_variance(&col, mean).max(VARIANCE_FLOOR));
        }
        means.push(m);
        variances.push(var);
    }

    Ok(BehaviorModel {
        slot_minutes,
        classes,
        class_user_counts: per_class.iter().map(|m| m.len() as u32).collect(),
        slot_weights,
        means,
        variances,
    })
}

/// Predicts the user's time zone; the vote weight is the winning class's
/// normalized posterior. Abstains only when the user has no messages.
pub fn classify_behavior(model: &BehaviorModel, user: &UserRecord) -> Option<ClassOutcome> {
    let posterior = model.posterior(user)?;
    let best = argmax_lexicographic(&posterior);
    Some(ClassOutcome {
        prediction: Prediction {
            label: model.classes[best].clone(),
            weight: posterior[best],
            source: "behavior".to_string(),
        },
        matching: model.classes.len(),
    })
}
