//! Trained-model persistence.
//!
//! A bundle freezes a trained predictor (and the optional traveler
//! model) together with the hash of the taxonomy it was trained against,
//! so a model can never silently run against different location tables.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LocationTaxonomy;
use crate::ensemble::TrainedPredictor;
use crate::movement::TravelModel;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub created_unix: u64,
    pub taxonomy_hash: String,
    pub predictor: TrainedPredictor,
    pub travel: Option<TravelModel>,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("failed to {action} bundle {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bundle {path} is not a valid model file: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("bundle version {found} is not supported (this build reads version {BUNDLE_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("bundle was trained against a different taxonomy (hash {found}, expected {expected})")]
    TaxonomyMismatch { found: String, expected: String },
}

impl ModelBundle {
    pub fn new(
        taxonomy: &LocationTaxonomy,
        predictor: TrainedPredictor,
        travel: Option<TravelModel>,
    ) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ModelBundle {
            version: BUNDLE_VERSION,
            created_unix,
            taxonomy_hash: taxonomy.content_hash(),
            predictor,
            travel,
        }
    }
}

pub fn save_bundle(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<(), BundleError> {
    let path = path.as_ref();
    let io_err = |source| BundleError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, bundle).map_err(|e| BundleError::Parse {
        path: path.display().to_string(),
        source: e,
    })?;
    use std::io::Write;
    w.flush().map_err(io_err)
}

/// Reads a bundle and verifies it matches this build's format version and
/// the given taxonomy.
pub fn load_bundle(
    path: impl AsRef<Path>,
    taxonomy: &LocationTaxonomy,
) -> Result<ModelBundle, BundleError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| BundleError::Io {
        action: "read",
        path: path.display().to_string(),
        source,
    })?;
    let bundle: ModelBundle =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| BundleError::Parse {
            path: path.display().to_string(),
            source: e,
        })?;
    if bundle.version != BUNDLE_VERSION {
        return Err(BundleError::VersionMismatch {
            found: bundle.version,
        });
    }
    let expected = taxonomy.content_hash();
    if bundle.taxonomy_hash != expected {
        return Err(BundleError::TaxonomyMismatch {
            found: bundle.taxonomy_hash,
            expected,
        });
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Granularity;
    use crate::ensemble::{
        train_predictor, ClassifierId, Combiner, EnsembleContext, EnsembleSpec, PredictorSpec,
        TrainParams,
    };
    use crate::eval::synth::{demo_gazetteer, demo_taxonomy, synthesize_corpus, SynthSpec};
    use crate::features::StopwordList;

    fn trained_fixture() -> (LocationTaxonomy, TrainedPredictor) {
        let tax = demo_taxonomy(1);
        let gaz = demo_gazetteer(&tax);
        let stop = StopwordList::default_english();
        let corpus = synthesize_corpus(
            &SynthSpec {
                users_per_city: 4,
                messages_per_user: 15,
                ..SynthSpec::default()
            },
            &tax,
        )
        .unwrap();
        let spec = PredictorSpec::Flat(EnsembleSpec {
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        });
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let predictor = train_predictor(&spec, &corpus.users, &ctx, &TrainParams::default()).unwrap();
        (tax, predictor)
    }

    #[test]
    fn bundle_round_trips() {
        let (tax, predictor) = trained_fixture();
        let bundle = ModelBundle::new(&tax, predictor, None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_bundle(&path, &bundle).unwrap();
        let loaded = load_bundle(&path, &tax).unwrap();
        assert_eq!(loaded.version, BUNDLE_VERSION);
        assert_eq!(loaded.taxonomy_hash, tax.content_hash());
        assert_eq!(
            serde_json::to_string(&loaded.predictor).unwrap(),
            serde_json::to_string(&bundle.predictor).unwrap()
        );
    }

    #[test]
    fn version_and_taxonomy_mismatches_are_rejected() {
        let (tax, predictor) = trained_fixture();
        let dir = tempfile::tempdir().unwrap();

        let mut stale = ModelBundle::new(&tax, predictor, None);
        stale.version = BUNDLE_VERSION + 1;
        let path = dir.path().join("stale.json");
        save_bundle(&path, &stale).unwrap();
        assert!(matches!(
            load_bundle(&path, &tax),
            Err(BundleError::VersionMismatch { found }) if found == BUNDLE_VERSION + 1
        ));

        stale.version = BUNDLE_VERSION;
        stale.taxonomy_hash = "0".repeat(64);
        let path = dir.path().join("wrong-tax.json");
        save_bundle(&path, &stale).unwrap();
        assert!(matches!(
            load_bundle(&path, &tax),
            Err(BundleError::TaxonomyMismatch { .. })
        ));
    }

    #[test]
    fn unreadable_files_surface_io_and_parse_errors() {
        let tax = demo_taxonomy(1);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_bundle(dir.path().join("absent.json"), &tax),
            Err(BundleError::Io { action: "read", .. })
        ));
        let path = dir.path().join("garbage.json");
        std::fs::write(&path, "not a model").unwrap();
        assert!(matches!(
            load_bundle(&path, &tax),
            Err(BundleError::Parse { .. })
        ));
    }
}
