//! Cross-validated evaluation.
//!
//! Runs a predictor through k-fold splits with per-fold retraining (term
//! selection included, so no test user influences the vocabulary), scores
//! exact and distance-relaxed accuracy, optionally pre-filters traveling
//! users from each test fold, and emits both a human report and a
//! deterministic machine-readable metrics table.

pub mod synth;

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{
    apply_message_cap, split_folds, FoldError, Granularity, LocationTaxonomy, UserRecord,
};
use crate::ensemble::{
    predict_user, train_predictor, ClassifierId, EnsembleContext, EnsembleTrainError,
    PredictorSpec, TrainParams,
};
use crate::movement::{
    filter_travelers, haversine_miles, train_travel_model, TravelTrainError,
};

/// Radii (miles) for the default relaxed-accuracy curve.
pub const DEFAULT_RELAXED_RADII: [f64; 5] = [0.0, 10.0, 50.0, 100.0, 1000.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no users to evaluate")]
    EmptyTestSet,
    #[error("no prediction recorded for user '{0}'")]
    MissingPrediction(String),
    #[error("user '{0}' has no home label; evaluation needs ground truth")]
    UnlabeledUser(String),
    #[error("label '{0}' is not a known city")]
    UnknownCity(String),
    #[error("invalid evaluation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error(transparent)]
    Train(#[from] EnsembleTrainError),
}

/// Fraction of users whose predicted label equals the true one. Every
/// truth user must have a prediction.
pub fn exact_accuracy(
    predictions: &BTreeMap<String, String>,
    truth: &BTreeMap<String, String>,
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut correct = 0usize;
    for (user, expected) in truth {
        let got = predictions
            .get(user)
            .ok_or_else(|| EvalError::MissingPrediction(user.clone()))?;
        if got == expected {
            correct += 1;
        }
    }
    Ok(correct as f64 / truth.len() as f64)
}

/// Counts a prediction as correct when its city centroid lies within
/// `radius_miles` of the true city's centroid. Labels must be city ids.
pub fn relaxed_accuracy(
    predictions: &BTreeMap<String, String>,
    truth: &BTreeMap<String, String>,
    taxonomy: &LocationTaxonomy,
    radius_miles: f64,
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let centroid = |label: &str| {
        taxonomy
            .city(label)
            .map(|c| crate::corpus::GeoPoint { lat: c.lat, lon: c.lon })
            .ok_or_else(|| EvalError::UnknownCity(label.to_string()))
    };
    let mut correct = 0usize;
    for (user, expected) in truth {
        let got = predictions
            .get(user)
            .ok_or_else(|| EvalError::MissingPrediction(user.clone()))?;
        if haversine_miles(centroid(got)?, centroid(expected)?) <= radius_miles {
            correct += 1;
        }
    }
    Ok(correct as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedPoint {
    pub radius_miles: f64,
    pub accuracy: f64,
}

/// Accuracy with one ensemble member knocked out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub removed: ClassifierId,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub granularity: Granularity,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Empty unless the predictor emits city labels.
    pub relaxed: Vec<RelaxedPoint>,
    pub ablations: Vec<AblationRow>,
    pub fold_test_sizes: Vec<usize>,
    pub fell_back: usize,
    pub n_removed_travelers: usize,
    /// Wall-clock median per-user prediction time. Reported to humans
    /// only; the metrics table omits it to stay byte-deterministic.
    pub median_predict_micros: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub predictor: PredictorSpec,
    pub folds: usize,
    pub seed: u64,
    pub params: TrainParams,
    /// Keep only each user's most recent messages before anything else.
    pub cap_messages: Option<usize>,
    /// Train a traveler model on each train fold and drop flagged users
    /// from that fold's test set.
    pub travel_filter: bool,
    pub travel_threshold_miles: f64,
    pub relaxed_radii: Vec<f64>,
    /// Re-run with each member knocked out (needs at least two members).
    pub ablate: bool,
}

impl ExperimentConfig {
    pub fn new(predictor: PredictorSpec, folds: usize, seed: u64) -> Self {
        ExperimentConfig {
            predictor,
            folds,
            seed,
            params: TrainParams::default(),
            cap_messages: None,
            travel_filter: false,
            travel_threshold_miles: 100.0,
            relaxed_radii: DEFAULT_RELAXED_RADII.to_vec(),
            ablate: false,
        }
    }
}

pub fn run_experiment(
    users: &[UserRecord],
    ctx: &EnsembleContext,
    config: &ExperimentConfig,
) -> Result<EvalReport, EvalError> {
    config
        .predictor
        .validate()
        .map_err(EnsembleTrainError::from)?;
    if config.travel_filter
        && !(config.travel_threshold_miles.is_finite() && config.travel_threshold_miles >= 0.0)
    {
        return Err(EvalError::BadConfig(format!(
            "travel threshold must be a non-negative distance, got {}",
            config.travel_threshold_miles
        )));
    }
    for &r in &config.relaxed_radii {
        if !r.is_finite() || r < 0.0 {
            return Err(EvalError::BadConfig(format!(
                "relaxed radius must be a non-negative distance, got {r}"
            )));
        }
    }

    let mut users = users.to_vec();
    if let Some(cap) = config.cap_messages {
        apply_message_cap(&mut users, cap);
    }
    let granularity = config.predictor.output_granularity();
    let folds = split_folds(&users, config.folds, config.seed)?;

    let mut predictions: BTreeMap<String, String> = BTreeMap::new();
    let mut truth: BTreeMap<String, String> = BTreeMap::new();
    let mut fold_test_sizes = Vec::with_capacity(folds.len());
    let mut latencies = Vec::new();
    let mut fell_back = 0usize;
    let mut n_removed_travelers = 0usize;

    for fold in &folds {
        let train: Vec<UserRecord> = fold.train.iter().map(|&i| users[i].clone()).collect();
        let mut test: Vec<UserRecord> = fold.test.iter().map(|&i| users[i].clone()).collect();

        if config.travel_filter {
            match train_travel_model(
                &train,
                ctx.gazetteer,
                ctx.stopwords,
                config.travel_threshold_miles,
            ) {
                Ok(model) => {
                    let (kept, dropped) =
                        filter_travelers(&test, &model, ctx.gazetteer, ctx.stopwords);
                    n_removed_travelers += dropped.len();
                    test = kept;
                }
                // With one class in the train fold there is nothing to
                // separate; keep the test fold whole.
                Err(TravelTrainError::SingleClass(_)) | Err(TravelTrainError::EmptyTrainingSet) => {}
                Err(TravelTrainError::BadThreshold(t)) => {
                    return Err(EvalError::BadConfig(format!(
                        "travel threshold must be a non-negative distance, got {t}"
                    )));
                }
            }
        }

        let predictor = train_predictor(&config.predictor, &train, ctx, &config.params)?;
        fold_test_sizes.push(test.len());
        for user in &test {
            let home = user
                .home_label
                .as_deref()
                .ok_or_else(|| EvalError::UnlabeledUser(user.user_id.clone()))?;
            let expected = ctx
                .taxonomy
                .project(home, granularity)
                .ok_or_else(|| EvalError::UnknownCity(home.to_string()))?;
            let started = Instant::now();
            let record = predict_user(&predictor, user, ctx);
            latencies.push(started.elapsed().as_micros() as u64);
            if record.fell_back {
                fell_back += 1;
            }
            predictions.insert(user.user_id.clone(), record.prediction.label);
            truth.insert(user.user_id.clone(), expected);
        }
    }

    if truth.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let n = truth.len();
    let accuracy = exact_accuracy(&predictions, &truth)?;
    let n_correct = (accuracy * n as f64).round() as usize;

    let relaxed = if granularity == Granularity::City {
        config
            .relaxed_radii
            .iter()
            .map(|&radius_miles| {
                Ok(RelaxedPoint {
                    radius_miles,
                    accuracy: relaxed_accuracy(&predictions, &truth, ctx.taxonomy, radius_miles)?,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?
    } else {
        Vec::new()
    };

    let ablations = if config.ablate && config.predictor.members().len() >= 2 {
        let mut rows = Vec::new();
        for &member in config.predictor.members() {
            let spec = config.predictor.without_member(member);
            if spec.validate().is_err() {
                continue;
            }
            let sub = ExperimentConfig {
                predictor: spec,
                ablate: false,
                relaxed_radii: Vec::new(),
                ..config.clone()
            };
            let sub_report = run_experiment(&users, ctx, &sub)?;
            rows.push(AblationRow {
                removed: member,
                accuracy: sub_report.accuracy,
            });
        }
        rows
    } else {
        Vec::new()
    };

    latencies.sort_unstable();
    let median_predict_micros = latencies[latencies.len() / 2];

    Ok(EvalReport {
        granularity,
        n,
        n_correct,
        accuracy,
        relaxed,
        ablations,
        fold_test_sizes,
        fell_back,
        n_removed_travelers,
        median_predict_micros,
    })
}

/// Formats a radius for a metric name: integral radii print bare.
fn radius_tag(radius: f64) -> String {
    if radius == radius.trunc() {
        format!("{}", radius as i64)
    } else {
        format!("{radius}")
    }
}

/// Tab-separated metrics, one per line: metric, granularity, config,
/// value. Excludes timing so identical runs produce identical bytes.
pub fn write_metrics_tsv(
    report: &EvalReport,
    config_name: &str,
    out: &mut impl Write,
) -> io::Result<()> {
    let g = report.granularity;
    writeln!(out, "metric\tgranularity\tconfig\tvalue")?;
    writeln!(out, "n\t{g}\t{config_name}\t{}", report.n)?;
    writeln!(out, "n_correct\t{g}\t{config_name}\t{}", report.n_correct)?;
    writeln!(out, "accuracy\t{g}\t{config_name}\t{:.6}", report.accuracy)?;
    writeln!(out, "fell_back\t{g}\t{config_name}\t{}", report.fell_back)?;
    writeln!(
        out,
        "removed_travelers\t{g}\t{config_name}\t{}",
        report.n_removed_travelers
    )?;
    for point in &report.relaxed {
        writeln!(
            out,
            "relaxed_accuracy_r{}\t{g}\t{config_name}\t{:.6}",
            radius_tag(point.radius_miles),
            point.accuracy
        )?;
    }
    for row in &report.ablations {
        writeln!(
            out,
            "ablation_without_{}\t{g}\t{config_name}\t{:.6}",
            row.removed, row.accuracy
        )?;
    }
    Ok(())
}

/// Human-oriented summary, timing included.
pub fn write_report_text(report: &EvalReport, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "granularity: {}", report.granularity)?;
    writeln!(
        out,
        "users evaluated: {} ({} flagged as traveling and removed)",
        report.n, report.n_removed_travelers
    )?;
    writeln!(
        out,
        "exact accuracy: {:.4} ({}/{})",
        report.accuracy, report.n_correct, report.n
    )?;
    writeln!(out, "fallback predictions: {}", report.fell_back)?;
    writeln!(
        out,
        "median prediction latency: {} us",
        report.median_predict_micros
    )?;
    if !report.relaxed.is_empty() {
        writeln!(out, "relaxed accuracy:")?;
        for point in &report.relaxed {
            writeln!(
                out,
                "  within {:>6} mi: {:.4}",
                radius_tag(point.radius_miles),
                point.accuracy
            )?;
        }
    }
    if !report.ablations.is_empty() {
        writeln!(out, "knock-out accuracy:")?;
        for row in &report.ablations {
            writeln!(out, "  without {}: {:.4}", row.removed, row.accuracy)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::synth::{demo_gazetteer, demo_taxonomy, synthesize_corpus, SynthSpec};
    use super::*;
    use crate::features::StopwordList;
    use crate::ensemble::{ClassifierId, Combiner, EnsembleSpec};

    fn pairs(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn exact_accuracy_counts_matches() {
        let truth = pairs(&[("a", "x"), ("b", "y"), ("c", "z")]);
        let predictions = pairs(&[("a", "x"), ("b", "y"), ("c", "nope")]);
        let acc = exact_accuracy(&predictions, &truth).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_accuracy_rejects_empty_and_missing() {
        let empty = BTreeMap::new();
        assert!(matches!(
            exact_accuracy(&empty, &empty),
            Err(EvalError::EmptyTestSet)
        ));
        let truth = pairs(&[("a", "x")]);
        assert!(matches!(
            exact_accuracy(&empty, &truth),
            Err(EvalError::MissingPrediction(u)) if u == "a"
        ));
    }

    #[test]
    fn relaxed_accuracy_respects_the_radius() {
        let tax = demo_taxonomy(2);
        // eastern_0 and eastern_1 sit 2.5 degrees of latitude apart,
        // roughly 173 miles.
        let truth = pairs(&[("u", "eastern_0")]);
        let predictions = pairs(&[("u", "eastern_1")]);
        let at = |r| relaxed_accuracy(&predictions, &truth, &tax, r).unwrap();
        assert_eq!(at(100.0), 0.0);
        assert_eq!(at(200.0), 1.0);

        let self_pred = pairs(&[("u", "eastern_0")]);
        assert_eq!(relaxed_accuracy(&self_pred, &truth, &tax, 0.0).unwrap(), 1.0);

        let bogus = pairs(&[("u", "atlantis")]);
        assert!(matches!(
            relaxed_accuracy(&bogus, &truth, &tax, 50.0),
            Err(EvalError::UnknownCity(c)) if c == "atlantis"
        ));
    }

    fn words_spec(granularity: Granularity) -> PredictorSpec {
        PredictorSpec::Flat(EnsembleSpec {
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
            granularity,
        })
    }

    #[test]
    fn experiment_covers_every_user_once() {
        let tax = demo_taxonomy(2);
        let gaz = demo_gazetteer(&tax);
        let stop = StopwordList::default_english();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let corpus = synthesize_corpus(
            &SynthSpec {
                users_per_city: 6,
                messages_per_user: 25,
                // Dense, nearly clean word vocabulary: this test exercises
                // the harness mechanics, not corpus difficulty.
                city_vocab: 12,
                leakage: 0.1,
                seed: 11,
                ..SynthSpec::default()
            },
            &tax,
        )
        .unwrap();
        let config = ExperimentConfig::new(words_spec(Granularity::City), 4, 3);
        let report = run_experiment(&corpus.users, &ctx, &config).unwrap();
        assert_eq!(report.n, corpus.users.len());
        assert_eq!(
            report.fold_test_sizes.iter().sum::<usize>(),
            corpus.users.len()
        );
        assert_eq!(report.relaxed.len(), DEFAULT_RELAXED_RADII.len());
        // Radius zero coincides with exact accuracy (centroids are
        // distinct), and widening the radius never hurts.
        assert_eq!(report.relaxed[0].accuracy, report.accuracy);
        for pair in report.relaxed.windows(2) {
            assert!(pair[1].accuracy >= pair[0].accuracy);
        }
        // Planted vocabulary should make this far better than the
        // 1-in-8 chance level.
        assert!(report.accuracy > 0.5, "accuracy {}", report.accuracy);
    }

    #[test]
    fn non_city_predictors_skip_the_relaxed_curve() {
        let tax = demo_taxonomy(2);
        let gaz = demo_gazetteer(&tax);
        let stop = StopwordList::default_english();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let corpus = synthesize_corpus(
            &SynthSpec {
                users_per_city: 4,
                messages_per_user: 20,
                seed: 5,
                ..SynthSpec::default()
            },
            &tax,
        )
        .unwrap();
        let config = ExperimentConfig::new(words_spec(Granularity::TimeZone), 3, 1);
        let report = run_experiment(&corpus.users, &ctx, &config).unwrap();
        assert!(report.relaxed.is_empty());
        assert_eq!(report.granularity, Granularity::TimeZone);
    }

    #[test]
    fn metrics_table_is_deterministic_and_untimed() {
        let tax = demo_taxonomy(2);
        let gaz = demo_gazetteer(&tax);
        let stop = StopwordList::default_english();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let corpus = synthesize_corpus(
            &SynthSpec {
                users_per_city: 5,
                messages_per_user: 15,
                seed: 21,
                ..SynthSpec::default()
            },
            &tax,
        )
        .unwrap();
        let mut config = ExperimentConfig::new(
            PredictorSpec::Flat(EnsembleSpec {
                members: vec![ClassifierId::Words, ClassifierId::Hashtags],
                combiner: Combiner::DynamicWeighted,
                granularity: Granularity::City,
            }),
            3,
            9,
        );
        config.ablate = true;

        let render = |report: &EvalReport| {
            let mut buf = Vec::new();
            write_metrics_tsv(report, "base", &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = render(&run_experiment(&corpus.users, &ctx, &config).unwrap());
        let b = render(&run_experiment(&corpus.users, &ctx, &config).unwrap());
        assert_eq!(a, b);
        assert!(!a.contains("latency"));
        assert!(a.starts_with("metric\tgranularity\tconfig\tvalue\n"));
        assert!(a.contains("\tcity\tbase\t"));
        assert!(a.contains("ablation_without_words"));
        assert!(a.contains("ablation_without_hashtags"));
        assert!(a.contains("relaxed_accuracy_r1000"));
    }

    #[test]
    fn travel_filter_drops_flagged_users_from_test_folds() {
        let tax = demo_taxonomy(1);
        let gaz = demo_gazetteer(&tax);
        let stop = StopwordList::default_english();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let corpus = synthesize_corpus(
            &SynthSpec {
                users_per_city: 15,
                messages_per_user: 40,
                traveler_fraction: 0.3,
                seed: 13,
                ..SynthSpec::default()
            },
            &tax,
        )
        .unwrap();
        assert!(!corpus.bookkeeping.travelers.is_empty());

        let mut config = ExperimentConfig::new(words_spec(Granularity::City), 4, 2);
        let plain = run_experiment(&corpus.users, &ctx, &config).unwrap();
        assert_eq!(plain.n, corpus.users.len());
        assert_eq!(plain.n_removed_travelers, 0);

        config.travel_filter = true;
        let filtered = run_experiment(&corpus.users, &ctx, &config).unwrap();
        assert!(filtered.n_removed_travelers > 0);
        assert_eq!(
            filtered.n + filtered.n_removed_travelers,
            corpus.users.len()
        );
    }

    #[test]
    fn invalid_specs_and_users_are_reported() {
        let tax = demo_taxonomy(1);
        let gaz = demo_gazetteer(&tax);
        let stop = StopwordList::default_english();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let corpus = synthesize_corpus(
            &SynthSpec {
                users_per_city: 3,
                messages_per_user: 8,
                ..SynthSpec::default()
            },
            &tax,
        )
        .unwrap();

        // A behavior member cannot vote on city labels.
        let bad = ExperimentConfig::new(
            PredictorSpec::Flat(EnsembleSpec {
                members: vec![ClassifierId::Behavior],
                combiner: Combiner::DynamicWeighted,
                granularity: Granularity::City,
            }),
            3,
            1,
        );
        assert!(matches!(
            run_experiment(&corpus.users, &ctx, &bad),
            Err(EvalError::Train(_))
        ));

        // Ground truth is mandatory.
        let mut unlabeled = corpus.users.clone();
        unlabeled[0].home_label = None;
        let config = ExperimentConfig::new(words_spec(Granularity::City), 3, 1);
        assert!(run_experiment(&unlabeled, &ctx, &config).is_err());

        let mut bad_radius = config.clone();
        bad_radius.relaxed_radii = vec![-5.0];
        assert!(matches!(
            run_experiment(&corpus.users, &ctx, &bad_radius),
            Err(EvalError::BadConfig(_))
        ));
    }
}
