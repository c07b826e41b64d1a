//! Geotag movement analysis: pairwise distance statistics, the
//! traveling-user rule and classifier, and the pre-filter that removes
//! suspected travelers before home-location evaluation.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Gazetteer, GeoPoint, UserRecord};
use crate::features::{namespaced, user_terms, StopwordList, TermFamily};

pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Great-circle distance between two coordinates, in miles.
pub fn haversine_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    EARTH_RADIUS_MILES * 2.0 * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Distance bands used in the movement report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceBucket {
    #[serde(rename = "0-10")]
    UpTo10,
    #[serde(rename = "11-100")]
    UpTo100,
    #[serde(rename = "101-500")]
    UpTo500,
    #[serde(rename = "500+")]
    Beyond500,
}

impl DistanceBucket {
    pub fn of_miles(d: f64) -> Self {
        if d <= 10.0 {
            DistanceBucket::UpTo10
        } else if d <= 100.0 {
            DistanceBucket::UpTo100
        } else if d <= 500.0 {
            DistanceBucket::UpTo500
        } else {
            DistanceBucket::Beyond500
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceBucket::UpTo10 => "0-10",
            DistanceBucket::UpTo100 => "11-100",
            DistanceBucket::UpTo500 => "101-500",
            DistanceBucket::Beyond500 => "500+",
        }
    }
}

/// Pairwise geotag distances for one user. With fewer than two geotags
/// both distances are zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovementStats {
    pub user_id: String,
    pub n_geotagged: u32,
    pub avg_pairwise_miles: f64,
    pub max_pairwise_miles: f64,
    pub bucket_avg: DistanceBucket,
    pub bucket_max: DistanceBucket,
}

/// Average and maximum over all unordered pairs of geotagged messages.
pub fn movement_stats(user: &UserRecord) -> MovementStats {
    let points: Vec<GeoPoint> = user.messages.iter().filter_map(|m| m.geotag).collect();
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut pairs = 0u64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = haversine_miles(points[i], points[j]);
            sum += d;
            max = max.max(d);
            pairs += 1;
        }
    }
    let avg = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
    MovementStats {
        user_id: user.user_id.clone(),
        n_geotagged: points.len() as u32,
        avg_pairwise_miles: avg,
        max_pairwise_miles: max,
        bucket_avg: DistanceBucket::of_miles(avg),
        bucket_max: DistanceBucket::of_miles(max),
    }
}

/// A user travels iff the maximum pairwise distance is strictly above the
/// threshold.
pub fn label_traveling(stats: &MovementStats, threshold_miles: f64) -> bool {
    stats.max_pairwise_miles > threshold_miles
}

// ---------------------------------------------------------------------------
// Traveling-user classifier
// ---------------------------------------------------------------------------

const HOURS: usize = 24;
const MAX_EPOCHS: usize = 2000;
const LEARNING_RATE: f64 = 1.0;
const GRAD_TOLERANCE: f64 = 1e-6;
// Keeps the thousands of incidental term features from accumulating noise
// weight; the handful of genuinely travel-linked features stay dominant.
const L2_PENALTY: f64 = 0.01;
// Terms seen by fewer users than this floor (and fewer than 2% of the
// training set) are excluded: standardization gives a near-singleton column
// enormous scale, so the optimizer can memorize its few users instead of
// learning transferable travel vocabulary.
const MIN_TERM_USERS: usize = 2;
const MIN_TERM_USER_FRACTION: f64 = 0.02;

/// Binary logistic model over normalized term proportions plus 24 hourly
/// time-spread features. Positive decision score means traveling.
///
/// Features are standardized with training-set statistics before the dot
/// product; raw proportions are tiny and unevenly spread, and gradient
/// descent does not converge on them directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelModel {
    /// Sorted, family-namespaced term vocabulary.
    pub vocabulary: Vec<String>,
    /// One weight per vocabulary term followed by 24 hourly weights.
    pub weights: Vec<f64>,
    /// Per-feature training means, same layout as `weights`.
    pub feature_means: Vec<f64>,
    /// Reciprocal training standard deviations; zero disables a feature
    /// that was constant in training.
    pub feature_scales: Vec<f64>,
    pub bias: f64,
    pub threshold_miles: f64,
    pub epochs_run: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum TravelTrainError {
    #[error("no users to train the travel classifier on")]
    EmptyTrainingSet,
    #[error("all training users are labeled {}", if *.0 { "traveling" } else { "non-traveling" })]
    SingleClass(bool),
    #[error("travel threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// L1-normalized bag of namespaced terms over all of a user's messages.
fn term_proportions(
    user: &UserRecord,
    stopwords: &StopwordList,
    gazetteer: &Gazetteer,
) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for family in TermFamily::ALL {
        for term in user_terms(user, family, stopwords, gazetteer) {
            *counts.entry(namespaced(family, &term)).or_insert(0.0) += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        for v in counts.values_mut() {
            *v /= total;
        }
    }
    counts
}

/// Per-hour standard deviation, across calendar days, of the share of that
/// day's messages falling in the hour. Stable under duplicating the whole
/// message list; spread grows when days look unlike each other.
fn time_spread(user: &UserRecord) -> [f64; HOURS] {
    let mut by_day: BTreeMap<chrono::NaiveDate, [f64; HOURS]> = BTreeMap::new();
    let mut day_totals: BTreeMap<chrono::NaiveDate, f64> = BTreeMap::new();
    for m in &user.messages {
        let day = m.created_at.date_naive();
        by_day.entry(day).or_insert([0.0; HOURS])[m.created_at.hour() as usize] += 1.0;
        *day_totals.entry(day).or_insert(0.0) += 1.0;
    }
    let days = by_day.len();
    let mut spread = [0.0; HOURS];
    if days < 2 {
        return spread;
    }
    let mut shares: Vec<[f64; HOURS]> = Vec::with_capacity(days);
    for (day, hist) in &by_day {
        let total = day_totals[day];
        let mut s = [0.0; HOURS];
        for h in 0..HOURS {
            s[h] = hist[h] / total;
        }
        shares.push(s);
    }
    for h in 0..HOURS {
        let mean = shares.iter().map(|s| s[h]).sum::<f64>() / days as f64;
        let var = shares.iter().map(|s| (s[h] - mean) * (s[h] - mean)).sum::<f64>() / days as f64;
        spread[h] = var.sqrt();
    }
    spread
}

/// Sparse feature vector: (term index, proportion) pairs plus the dense
/// hourly spread block at indices `vocab_len..vocab_len + 24`.
struct FeatureRow {
    terms: Vec<(usize, f64)>,
    spread: [f64; HOURS],
}

fn feature_row(
    user: &UserRecord,
    vocab_index: &BTreeMap<&str, usize>,
    stopwords: &StopwordList,
    gazetteer: &Gazetteer,
) -> FeatureRow {
    let terms = term_proportions(user, stopwords, gazetteer)
        .into_iter()
        .filter_map(|(t, v)| vocab_index.get(t.as_str()).map(|&i| (i, v)))
        .collect();
    FeatureRow {
        terms,
        spread: time_spread(user),
    }
}

/// The standardized dot product rearranged for sparse rows:
/// sum_j w_j (x_j - mu_j) s_j + b  =  sum_{j in row} w_j x_j s_j - center + b,
/// where `center = sum_j w_j mu_j s_j` depends only on the model.
fn center_term(model: &TravelModel) -> f64 {
    model
        .weights
        .iter()
        .zip(&model.feature_means)
        .zip(&model.feature_scales)
        .map(|((w, m), s)| w * m * s)
        .sum()
}

fn decision_score(model: &TravelModel, row: &FeatureRow, center: f64) -> f64 {
    let mut s = model.bias - center;
    for &(i, v) in &row.terms {
        s += model.weights[i] * v * model.feature_scales[i];
    }
    let base = model.vocabulary.len();
    for (h, &v) in row.spread.iter().enumerate() {
        s += model.weights[base + h] * v * model.feature_scales[base + h];
    }
    s
}

/// Per-feature training means and reciprocal population standard
/// deviations; constant features get scale zero and never influence the
/// score.
fn fit_standardization(rows: &[FeatureRow], dim: usize, vocab_len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut sum = vec![0.0; dim];
    let mut sumsq = vec![0.0; dim];
    for row in rows {
        for &(i, v) in &row.terms {
            sum[i] += v;
            sumsq[i] += v * v;
        }
        for (h, &v) in row.spread.iter().enumerate() {
            sum[vocab_len + h] += v;
            sumsq[vocab_len + h] += v * v;
        }
    }
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let scales = (0..dim)
        .map(|j| {
            let var = (sumsq[j] / n - means[j] * means[j]).max(0.0);
            let std = var.sqrt();
            if std > 1e-12 {
                1.0 / std
            } else {
                0.0
            }
        })
        .collect();
    (means, scales)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains the traveling-user classifier with full-batch gradient descent.
/// Labels come from the pairwise-distance rule at `threshold_miles`.
pub fn train_travel_model(
    users: &[UserRecord],
    gazetteer: &Gazetteer,
    stopwords: &StopwordList,
    threshold_miles: f64,
) -> Result<TravelModel, TravelTrainError> {
    if users.is_empty() {
        return Err(TravelTrainError::EmptyTrainingSet);
    }
    if !(threshold_miles > 0.0) || !threshold_miles.is_finite() {
        return Err(TravelTrainError::BadThreshold(threshold_miles));
    }
    let labels: Vec<bool> = users
        .iter()
        .map(|u| label_traveling(&movement_stats(u), threshold_miles))
        .collect();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(TravelTrainError::SingleClass(labels[0]));
    }

    let min_users = ((users.len() as f64 * MIN_TERM_USER_FRACTION).ceil() as usize)
        .max(MIN_TERM_USERS);
    let mut term_users: BTreeMap<String, usize> = BTreeMap::new();
    for user in users {
        let mut seen = BTreeSet::new();
        for family in TermFamily::ALL {
            for term in user_terms(user, family, stopwords, gazetteer) {
                seen.insert(namespaced(family, &term));
            }
        }
        for term in seen {
            *term_users.entry(term).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> = term_users
        .into_iter()
        .filter(|&(_, count)| count >= min_users)
        .map(|(term, _)| term)
        .collect();
    let vocab_index: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let rows: Vec<FeatureRow> = users
        .iter()
        .map(|u| feature_row(u, &vocab_index, stopwords, gazetteer))
        .collect();

    let dim = vocabulary.len() + HOURS;
    let (feature_means, feature_scales) = fit_standardization(&rows, dim, vocabulary.len());
    let mut model = TravelModel {
        vocabulary,
        weights: vec![0.0; dim],
        feature_means,
        feature_scales,
        bias: 0.0,
        threshold_miles,
        epochs_run: 0,
    };
    let n = users.len() as f64;
    let mut grad = vec![0.0; dim];
    for epoch in 0..MAX_EPOCHS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut err_sum = 0.0;
        let center = center_term(&model);
        for (row, &label) in rows.iter().zip(&labels) {
            let err = sigmoid(decision_score(&model, row, center)) - if label { 1.0 } else { 0.0 };
            for &(i, v) in &row.terms {
                grad[i] += err * v * model.feature_scales[i];
            }
            let base = model.vocabulary.len();
            for (h, &v) in row.spread.iter().enumerate() {
                grad[base + h] += err * v * model.feature_scales[base + h];
            }
            err_sum += err;
        }
        let mut max_grad = (err_sum / n).abs();
        for (j, (w, g)) in model.weights.iter_mut().zip(&grad).enumerate() {
            // Complete the standardized gradient: the sparse loop skipped
            // each row's implicit -mu_j * s_j contribution.
            let g = (g - model.feature_means[j] * model.feature_scales[j] * err_sum) / n
                + L2_PENALTY * *w;
            *w -= LEARNING_RATE * g;
            max_grad = max_grad.max(g.abs());
        }
        model.bias -= LEARNING_RATE * err_sum / n;
        model.epochs_run = epoch as u32 + 1;
        if max_grad < GRAD_TOLERANCE {
            break;
        }
    }
    Ok(model)
}

pub fn predict_traveling(
    model: &TravelModel,
    user: &UserRecord,
    gazetteer: &Gazetteer,
    stopwords: &StopwordList,
) -> bool {
    let vocab_index: BTreeMap<&str, usize> = model
        .vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let row = feature_row(user, &vocab_index, stopwords, gazetteer);
    decision_score(model, &row, center_term(model)) > 0.0
}

/// Splits users into (kept, removed-as-traveling) by the model decision.
pub fn filter_travelers(
    users: &[UserRecord],
    model: &TravelModel,
    gazetteer: &Gazetteer,
    stopwords: &StopwordList,
) -> (Vec<UserRecord>, Vec<UserRecord>) {
    let vocab_index: BTreeMap<&str, usize> = model
        .vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let center = center_term(model);
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for user in users {
        let row = feature_row(user, &vocab_index, stopwords, gazetteer);
        if decision_score(model, &row, center) > 0.0 {
            removed.push(user.clone());
        } else {
            kept.push(user.clone());
        }
    }
    (kept, removed)
}

/// Writes the per-user movement report: tab-separated, one row per user.
pub fn write_movement_report<W: std::io::Write>(
    out: &mut W,
    stats: &[MovementStats],
    threshold_miles: f64,
) -> std::io::Result<()> {
    writeln!(
        out,
        "user_id\tn_geotagged\tavg_miles\tmax_miles\tbucket_avg\tbucket_max\ttraveling"
    )?;
    for s in stats {
        writeln!(
            out,
            "{}\t{}\t{:.3}\t{:.3}\t{}\t{}\t{}",
            s.user_id,
            s.n_geotagged,
            s.avg_pairwise_miles,
            s.max_pairwise_miles,
            s.bucket_avg.as_str(),
            s.bucket_max.as_str(),
            label_traveling(s, threshold_miles)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Message;
    use approx::assert_abs_diff_eq;
    use chrono::{TimeZone, Utc};

    fn point(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::checked(lat, lon).unwrap()
    }

    fn user_with_geotags(id: &str, points: &[(f64, f64)], texts: &[&str]) -> UserRecord {
        let n = points.len().max(texts.len()).max(1);
        UserRecord {
            user_id: id.into(),
            home_label: None,
            messages: (0..n)
                .map(|i| Message {
                    text: texts.get(i % texts.len().max(1)).unwrap_or(&"").to_string(),
                    created_at: Utc
                        .with_ymd_and_hms(
                            2011,
                            7,
                            1 + (i / 24) as u32,
                            (i % 24) as u32,
                            (i * 7 % 60) as u32,
                            0,
                        )
                        .unwrap(),
                    geotag: points.get(i).map(|&(la, lo)| point(la, lo)),
                    venue: None,
                })
                .collect(),
        }
    }

    #[test]
    fn haversine_matches_reference_values() {
        assert_eq!(haversine_miles(point(40.0, -100.0), point(40.0, -100.0)), 0.0);
        // New York to Los Angeles.
        let d = haversine_miles(point(40.6943, -73.9249), point(34.0522, -118.2437));
        assert_abs_diff_eq!(d, 2449.908657802423, epsilon = 1e-6);
        let d2 = haversine_miles(point(40.7128, -74.0060), point(34.0522, -118.2437));
        assert_abs_diff_eq!(d2, 2445.586606929677, epsilon = 1e-6);
        // Antipodal points travel half the circumference.
        let anti = haversine_miles(point(0.0, 0.0), point(0.0, 180.0));
        assert_abs_diff_eq!(anti, std::f64::consts::PI * EARTH_RADIUS_MILES, epsilon = 1e-6);
    }

    #[test]
    fn haversine_is_symmetric() {
        let pairs = [
            ((42.36, -71.06), (39.74, -104.99)),
            ((0.0, 0.0), (-45.0, 170.0)),
            ((89.0, 10.0), (-89.0, -10.0)),
        ];
        for ((a1, a2), (b1, b2)) in pairs {
            assert_eq!(
                haversine_miles(point(a1, a2), point(b1, b2)),
                haversine_miles(point(b1, b2), point(a1, a2))
            );
        }
    }

    #[test]
    fn stats_over_a_single_pair() {
        // 150 miles is about 2.171 degrees of latitude.
        let user = user_with_geotags("u", &[(40.0, -100.0), (42.170958, -100.0)], &[""]);
        let stats = movement_stats(&user);
        assert_eq!(stats.n_geotagged, 2);
        assert_abs_diff_eq!(stats.avg_pairwise_miles, 150.0, epsilon = 0.01);
        assert_eq!(stats.avg_pairwise_miles, stats.max_pairwise_miles);
        assert_eq!(stats.bucket_max, DistanceBucket::UpTo500);
    }

    #[test]
    fn fewer_than_two_geotags_yield_zeros() {
        let user = user_with_geotags("u", &[(40.0, -100.0)], &["hello"]);
        let stats = movement_stats(&user);
        assert_eq!(stats.n_geotagged, 1);
        assert_eq!(stats.avg_pairwise_miles, 0.0);
        assert_eq!(stats.max_pairwise_miles, 0.0);
        assert_eq!(stats.bucket_avg, DistanceBucket::UpTo10);
        assert_eq!(stats.bucket_max, DistanceBucket::UpTo10);
    }

    #[test]
    fn collinear_points_average_over_all_pairs() {
        // Points at 0, 10, 20 miles along a meridian: pairs 10 + 10 + 20.
        let step = 10.0 / 69.09409442795152;
        let user = user_with_geotags(
            "u",
            &[(40.0, -100.0), (40.0 + step, -100.0), (40.0 + 2.0 * step, -100.0)],
            &[""],
        );
        let stats = movement_stats(&user);
        assert_abs_diff_eq!(stats.max_pairwise_miles, 20.0, epsilon = 0.01);
        assert_abs_diff_eq!(stats.avg_pairwise_miles, 40.0 / 3.0, epsilon = 0.01);
    }

    #[test]
    fn buckets_cover_the_line_without_gaps() {
        let cases = [
            (0.0, DistanceBucket::UpTo10),
            (10.0, DistanceBucket::UpTo10),
            (10.001, DistanceBucket::UpTo100),
            (100.0, DistanceBucket::UpTo100),
            (100.001, DistanceBucket::UpTo500),
            (500.0, DistanceBucket::UpTo500),
            (500.001, DistanceBucket::Beyond500),
            (12437.0, DistanceBucket::Beyond500),
        ];
        for (d, expected) in cases {
            assert_eq!(DistanceBucket::of_miles(d), expected, "distance {d}");
        }
    }

    #[test]
    fn traveling_needs_strictly_more_than_the_threshold() {
        let mut stats = MovementStats {
            user_id: "u".into(),
            n_geotagged: 2,
            avg_pairwise_miles: 100.0,
            max_pairwise_miles: 100.0,
            bucket_avg: DistanceBucket::UpTo100,
            bucket_max: DistanceBucket::UpTo100,
        };
        assert!(!label_traveling(&stats, 100.0));
        stats.max_pairwise_miles = 100.0001;
        assert!(label_traveling(&stats, 100.0));
        stats.max_pairwise_miles = 0.0;
        stats.n_geotagged = 0;
        assert!(!label_traveling(&stats, 100.0));
    }

    // -- travel classifier ----------------------------------------------

    fn empty_gazetteer() -> Gazetteer {
        let tax = crate::corpus::LocationTaxonomy::from_entries(
            vec![crate::corpus::CityEntry {
                city_id: "x".into(),
                name: "X".into(),
                state_id: "S".into(),
                lat: 0.0,
                lon: 0.0,
            }],
            vec![crate::corpus::StateEntry {
                state_id: "S".into(),
                timezone: "Eastern".into(),
                census_region: "NE".into(),
                federal_region: "R1".into(),
            }],
        )
        .unwrap();
        Gazetteer::from_entries(vec![], &tax).unwrap()
    }

    fn travel_corpus() -> Vec<UserRecord> {
        let mut users = Vec::new();
        for i in 0..6 {
            // Travelers: two geotags 200+ miles apart and travel talk.
            users.push(user_with_geotags(
                &format!("t{i}"),
                &[(40.0, -100.0), (43.0, -100.0)],
                &["booked a flight and an airport hotel", "flight delayed again"],
            ));
            // Homebodies: tight geotags and local talk.
            users.push(user_with_geotags(
                &format!("h{i}"),
                &[(40.0, -100.0), (40.01, -100.0)],
                &["coffee then gym then work", "quiet night at home"],
            ));
        }
        users
    }

    #[test]
    fn travel_model_separates_planted_signal() {
        let gaz = empty_gazetteer();
        let stop = StopwordList::default_english();
        let users = travel_corpus();
        let model = train_travel_model(&users, &gaz, &stop, 100.0).unwrap();
        for user in &users {
            let truth = label_traveling(&movement_stats(user), 100.0);
            assert_eq!(
                predict_traveling(&model, user, &gaz, &stop),
                truth,
                "user {}",
                user.user_id
            );
        }
    }

    #[test]
    fn training_requires_both_classes() {
        let gaz = empty_gazetteer();
        let stop = StopwordList::default_english();
        let homebodies: Vec<UserRecord> = travel_corpus()
            .into_iter()
            .filter(|u| u.user_id.starts_with('h'))
            .collect();
        assert_eq!(
            train_travel_model(&homebodies, &gaz, &stop, 100.0).unwrap_err(),
            TravelTrainError::SingleClass(false)
        );
        assert_eq!(
            train_travel_model(&[], &gaz, &stop, 100.0).unwrap_err(),
            TravelTrainError::EmptyTrainingSet
        );
    }

    #[test]
    fn training_is_deterministic() {
        let gaz = empty_gazetteer();
        let stop = StopwordList::default_english();
        let users = travel_corpus();
        let a = train_travel_model(&users, &gaz, &stop, 100.0).unwrap();
        let b = train_travel_model(&users, &gaz, &stop, 100.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicating_the_message_list_changes_nothing() {
        let gaz = empty_gazetteer();
        let stop = StopwordList::default_english();
        let users = travel_corpus();
        let model = train_travel_model(&users, &gaz, &stop, 100.0).unwrap();
        for user in &users {
            let mut doubled = user.clone();
            doubled.messages.extend(user.messages.iter().cloned());
            assert_eq!(
                predict_traveling(&model, &doubled, &gaz, &stop),
                predict_traveling(&model, user, &gaz, &stop)
            );
        }
    }

    #[test]
    fn single_user_terms_stay_out_of_the_vocabulary() {
        let gaz = empty_gazetteer();
        let stop = StopwordList::default_english();
        let mut users = travel_corpus();
        let mut extra = users[0].messages[0].clone();
        extra.text = "xylophonic".into();
        users[0].messages.push(extra);
        let model = train_travel_model(&users, &gaz, &stop, 100.0).unwrap();
        assert!(!model.vocabulary.iter().any(|t| t.ends_with("xylophonic")));
        assert!(model.vocabulary.iter().any(|t| t == "words:flight"));
    }

    #[test]
    fn filter_partitions_the_input() {
        let gaz = empty_gazetteer();
        let stop = StopwordList::default_english();
        let users = travel_corpus();
        let model = train_travel_model(&users, &gaz, &stop, 100.0).unwrap();
        let (kept, removed) = filter_travelers(&users, &model, &gaz, &stop);
        assert_eq!(kept.len() + removed.len(), users.len());
        assert!(kept.iter().all(|u| u.user_id.starts_with('h')));
        assert!(removed.iter().all(|u| u.user_id.starts_with('t')));

        let (kept, removed) = filter_travelers(&[], &model, &gaz, &stop);
        assert!(kept.is_empty() && removed.is_empty());
    }

    #[test]
    fn movement_report_lists_one_row_per_user() {
        let users = travel_corpus();
        let stats: Vec<MovementStats> = users.iter().map(movement_stats).collect();
        let mut buf = Vec::new();
        write_movement_report(&mut buf, &stats, 100.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), users.len() + 1);
        assert!(lines[0].starts_with("user_id\t"));
        // First row is a traveler about 207 miles out.
        assert!(lines[1].starts_with("t0\t2\t"));
        assert!(lines[1].ends_with("101-500\ttrue"));
    }
}
