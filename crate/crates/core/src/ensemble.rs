//! Classifier combination: dynamically weighted and majority-vote
//! ensembles, the single-model baseline over all term families, and the
//! two-level hierarchical predictor that routes a coarse first-level label
//! to a per-branch city ensemble.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    classify_behavior, classify_local_place, classify_term_model, classify_visit_history,
    train_behavior_model, train_term_model, BehaviorModel, ClassOutcome, Prediction,
    PreResolvedVenues, TermModel, TrainError, VocabSource,
};
use crate::corpus::{Gazetteer, Granularity, LocationTaxonomy, UserRecord};
use crate::features::{
    compute_term_stats, namespaced, select_local_terms, FeatureError, LocalTermConfig,
    StopwordList, TermFamily,
};

/// The classifiers an ensemble can draw on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierId {
    Words,
    Hashtags,
    PlaceNames,
    LocalPlace,
    VisitHistory,
    Behavior,
    /// One multinomial model over the union of all three term families.
    Single,
}

impl ClassifierId {
    pub const ALL: [ClassifierId; 7] = [
        ClassifierId::Words,
        ClassifierId::Hashtags,
        ClassifierId::PlaceNames,
        ClassifierId::LocalPlace,
        ClassifierId::VisitHistory,
        ClassifierId::Behavior,
        ClassifierId::Single,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierId::Words => "words",
            ClassifierId::Hashtags => "hashtags",
            ClassifierId::PlaceNames => "placenames",
            ClassifierId::LocalPlace => "localplace",
            ClassifierId::VisitHistory => "visithistory",
            ClassifierId::Behavior => "behavior",
            ClassifierId::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s)
    }

    /// Whether this classifier can emit labels at the given granularity.
    /// The behavior classifier speaks time zones only; place mentions name
    /// cities and states, not regions.
    pub fn admissible_at(self, granularity: Granularity) -> bool {
        match self {
            ClassifierId::Behavior => granularity == Granularity::TimeZone,
            ClassifierId::LocalPlace => {
                matches!(granularity, Granularity::City | Granularity::State)
            }
            _ => true,
        }
    }

    fn term_family(self) -> Option<TermFamily> {
        match self {
            ClassifierId::Words => Some(TermFamily::Words),
            ClassifierId::Hashtags => Some(TermFamily::Hashtags),
            ClassifierId::PlaceNames => Some(TermFamily::PlaceNames),
            _ => None,
        }
    }
}

impl std::fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    #[serde(rename = "dynamic")]
    DynamicWeighted,
    #[serde(rename = "majority")]
    MajorityVote,
}

impl Combiner {
    pub fn as_str(self) -> &'static str {
        match self {
            Combiner::DynamicWeighted => "dynamic",
            Combiner::MajorityVote => "majority",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dynamic" => Some(Combiner::DynamicWeighted),
            "majority" => Some(Combiner::MajorityVote),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("ensemble needs at least one member")]
    EmptyMembers,
    #[error("member '{0}' listed twice")]
    DuplicateMember(ClassifierId),
    #[error("member '{member}' cannot emit labels at {granularity} granularity")]
    InadmissibleMember {
        member: ClassifierId,
        granularity: Granularity,
    },
    #[error("hierarchy first level must be coarser than city, got {0}")]
    CityFirstLevel(Granularity),
    #[error("no configured member can emit labels at {0} granularity")]
    NoAdmissibleMembers(Granularity),
}

/// A flat ensemble: which classifiers vote, how votes combine, and at what
/// label granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<ClassifierId>,
    pub combiner: Combiner,
    pub granularity: Granularity,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.members.is_empty() {
            return Err(SpecError::EmptyMembers);
        }
        let mut seen = BTreeSet::new();
        for &m in &self.members {
            if !seen.insert(m) {
                return Err(SpecError::DuplicateMember(m));
            }
            if !m.admissible_at(self.granularity) {
                return Err(SpecError::InadmissibleMember {
                    member: m,
                    granularity: self.granularity,
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Vote combination
// ---------------------------------------------------------------------------

fn combine_scored(scores: BTreeMap<&str, f64>, fallback: &str) -> Prediction {
    let mut best: Option<(&str, f64)> = None;
    for (label, &s) in &scores {
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((label, s)),
        }
    }
    match best {
        Some((label, score)) => Prediction {
            label: label.to_string(),
            weight: score,
            source: "ensemble".to_string(),
        },
        None => Prediction {
            label: fallback.to_string(),
            weight: 0.0,
            source: "fallback".to_string(),
        },
    }
}

/// Sums each member's weight onto its voted label and takes the argmax;
/// lexicographic tie-break; empty vote list yields the fallback label.
pub fn combine_dynamic(predictions: &[Prediction], fallback: &str) -> Prediction {
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for p in predictions {
        *scores.entry(p.label.as_str()).or_insert(0.0) += p.weight;
    }
    combine_scored(scores, fallback)
}

/// Counts one vote per member regardless of weight.
pub fn combine_majority(predictions: &[Prediction], fallback: &str) -> Prediction {
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for p in predictions {
        *scores.entry(p.label.as_str()).or_insert(0.0) += 1.0;
    }
    combine_scored(scores, fallback)
}

// ---------------------------------------------------------------------------
// Flat ensemble training and prediction
// ---------------------------------------------------------------------------

/// Shared immutable inputs every classifier needs at train and predict
/// time.
#[derive(Clone, Copy)]
pub struct EnsembleContext<'a> {
    pub taxonomy: &'a LocationTaxonomy,
    pub gazetteer: &'a Gazetteer,
    pub stopwords: &'a StopwordList,
}

/// Training knobs shared across members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub alpha: f64,
    pub local_terms: LocalTermConfig,
    pub slot_minutes: u32,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            alpha: 1.0,
            local_terms: LocalTermConfig::default(),
            slot_minutes: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum EnsembleTrainError {
    #[error("invalid ensemble configuration: {0}")]
    Spec(#[from] SpecError),
    #[error("invalid training parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Stats(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub spec: EnsembleSpec,
    pub term_models: Vec<(ClassifierId, TermModel)>,
    pub behavior: Option<BehaviorModel>,
    /// Most frequent training label; used when every member abstains.
    pub fallback_label: String,
    /// Members whose training data carried no usable signal (empty local
    /// vocabulary, or a time zone with no users). They never vote.
    pub disabled_members: Vec<ClassifierId>,
    /// Labels seen in training. Statistical members can only emit these,
    /// but the gazetteer-backed heuristics can name any place on the map,
    /// so their votes are clipped to this pool. A branch model in a
    /// hierarchy then never votes outside its branch.
    pub label_pool: BTreeSet<String>,
}

/// Most frequent projected label in the training set, ties resolving to
/// the lexicographically smallest.
pub fn majority_label(
    users: &[UserRecord],
    granularity: Granularity,
    taxonomy: &LocationTaxonomy,
) -> Result<String, TrainError> {
    if users.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for user in users {
        let home = user
            .home_label
            .as_deref()
            .ok_or_else(|| TrainError::UnlabeledUser(user.user_id.clone()))?;
        let label = taxonomy
            .project(home, granularity)
            .ok_or_else(|| TrainError::UnknownLabel(home.to_string()))?;
        *counts.entry(label).or_default() += 1;
    }
    let mut best: Option<(&str, u32)> = None;
    for (label, &c) in &counts {
        match best {
            Some((_, bc)) if c <= bc => {}
            _ => best = Some((label, c)),
        }
    }
    Ok(best.unwrap().0.to_string())
}

fn selected_family_terms(
    users: &[UserRecord],
    family: TermFamily,
    granularity: Granularity,
    ctx: &EnsembleContext,
    config: &LocalTermConfig,
) -> Result<BTreeSet<String>, EnsembleTrainError> {
    let table = compute_term_stats(
        users,
        family,
        granularity,
        ctx.taxonomy,
        ctx.gazetteer,
        ctx.stopwords,
    )?;
    Ok(select_local_terms(
        &table.stats,
        &table.users_per_location,
        config,
    ))
}

fn union_vocabulary(
    users: &[UserRecord],
    granularity: Granularity,
    ctx: &EnsembleContext,
    config: &LocalTermConfig,
) -> Result<BTreeSet<String>, EnsembleTrainError> {
    let mut union = BTreeSet::new();
    for family in TermFamily::ALL {
        for term in selected_family_terms(users, family, granularity, ctx, config)? {
            union.insert(namespaced(family, &term));
        }
    }
    Ok(union)
}

/// One multinomial model over the union of all three families' local
/// terms, namespaced by family so identical spellings stay distinct.
pub fn train_single_statistical(
    users: &[UserRecord],
    granularity: Granularity,
    ctx: &EnsembleContext,
    params: &TrainParams,
) -> Result<TermModel, EnsembleTrainError> {
    let union = union_vocabulary(users, granularity, ctx, &params.local_terms)?;
    Ok(train_term_model(
        users,
        VocabSource::UnionOfFamilies,
        granularity,
        &union,
        ctx.taxonomy,
        ctx.gazetteer,
        ctx.stopwords,
        params.alpha,
    )?)
}

/// Trains every member of a flat ensemble. A member whose training data
/// has no usable signal is disabled rather than failing the whole
/// ensemble; heuristic members need no training.
pub fn train_flat(
    spec: &EnsembleSpec,
    users: &[UserRecord],
    ctx: &EnsembleContext,
    params: &TrainParams,
) -> Result<TrainedEnsemble, EnsembleTrainError> {
    spec.validate()?;
    params
        .local_terms
        .validate()
        .map_err(EnsembleTrainError::Params)?;
    let fallback_label = majority_label(users, spec.granularity, ctx.taxonomy)?;

    let mut term_models = Vec::new();
    let mut behavior = None;
    let mut disabled = Vec::new();
    for &member in &spec.members {
        match member {
            ClassifierId::Words | ClassifierId::Hashtags | ClassifierId::PlaceNames => {
                let family = member.term_family().unwrap();
                let local =
                    selected_family_terms(users, family, spec.granularity, ctx, &params.local_terms)?;
                if local.is_empty() {
                    disabled.push(member);
                    continue;
                }
                let model = train_term_model(
                    users,
                    VocabSource::Family(family),
                    spec.granularity,
                    &local,
                    ctx.taxonomy,
                    ctx.gazetteer,
                    ctx.stopwords,
                    params.alpha,
                )?;
                term_models.push((member, model));
            }
            ClassifierId::Single => {
                let union = union_vocabulary(users, spec.granularity, ctx, &params.local_terms)?;
                if union.is_empty() {
                    disabled.push(member);
                    continue;
                }
                let model = train_term_model(
                    users,
                    VocabSource::UnionOfFamilies,
                    spec.granularity,
                    &union,
                    ctx.taxonomy,
                    ctx.gazetteer,
                    ctx.stopwords,
                    params.alpha,
                )?;
                term_models.push((member, model));
            }
            ClassifierId::Behavior => {
                match train_behavior_model(users, ctx.taxonomy, params.slot_minutes) {
                    Ok(model) => behavior = Some(model),
                    Err(TrainError::EmptyZone(_)) => disabled.push(member),
                    Err(e) => return Err(e.into()),
                }
            }
            ClassifierId::LocalPlace | ClassifierId::VisitHistory => {}
        }
    }
    let mut label_pool = BTreeSet::new();
    for user in users {
        if let Some(home) = &user.home_label {
            if let Some(label) = ctx.taxonomy.project(home, spec.granularity) {
                label_pool.insert(label);
            }
        }
    }
    Ok(TrainedEnsemble {
        spec: spec.clone(),
        term_models,
        behavior,
        fallback_label,
        disabled_members: disabled,
        label_pool,
    })
}

/// A combined prediction plus the raw member votes behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatPrediction {
    pub prediction: Prediction,
    /// True when every member abstained and the fallback label was used.
    pub fell_back: bool,
    pub votes: Vec<Prediction>,
}

fn member_outcome(
    ens: &TrainedEnsemble,
    member: ClassifierId,
    user: &UserRecord,
    ctx: &EnsembleContext,
) -> Option<ClassOutcome> {
    match member {
        ClassifierId::Words
        | ClassifierId::Hashtags
        | ClassifierId::PlaceNames
        | ClassifierId::Single => {
            let model = &ens.term_models.iter().find(|(id, _)| *id == member)?.1;
            let terms = model.source.terms_for_user(user, ctx.stopwords, ctx.gazetteer);
            classify_term_model(model, &terms)
        }
        ClassifierId::Behavior => classify_behavior(ens.behavior.as_ref()?, user),
        ClassifierId::LocalPlace => {
            classify_local_place(user, ens.spec.granularity, ctx.gazetteer, ctx.taxonomy)
                .expect("spec validation admits place mentions only at city or state")
                .filter(|o| ens.label_pool.contains(&o.prediction.label))
        }
        ClassifierId::VisitHistory => {
            classify_visit_history(user, ens.spec.granularity, &PreResolvedVenues, ctx.taxonomy)
                .outcome
                .filter(|o| ens.label_pool.contains(&o.prediction.label))
        }
    }
}

pub fn predict_flat(
    ens: &TrainedEnsemble,
    user: &UserRecord,
    ctx: &EnsembleContext,
) -> FlatPrediction {
    let mut votes = Vec::new();
    for &member in &ens.spec.members {
        if ens.disabled_members.contains(&member) {
            continue;
        }
        if let Some(outcome) = member_outcome(ens, member, user, ctx) {
            votes.push(outcome.prediction);
        }
    }
    let fell_back = votes.is_empty();
    let prediction = match ens.spec.combiner {
        Combiner::DynamicWeighted => combine_dynamic(&votes, &ens.fallback_label),
        Combiner::MajorityVote => combine_majority(&votes, &ens.fallback_label),
    };
    FlatPrediction {
        prediction,
        fell_back,
        votes,
    }
}

// ---------------------------------------------------------------------------
// Two-level hierarchy
// ---------------------------------------------------------------------------

/// A two-level predictor: a coarse first level, then per-branch city
/// ensembles. One member pool serves both levels; members that cannot emit
/// labels at a level are left out of that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub first_level: Granularity,
    pub members: Vec<ClassifierId>,
    pub combiner: Combiner,
}

impl HierarchySpec {
    fn level_members(&self, granularity: Granularity) -> Vec<ClassifierId> {
        self.members
            .iter()
            .copied()
            .filter(|m| m.admissible_at(granularity))
            .collect()
    }

    pub fn first_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            members: self.level_members(self.first_level),
            combiner: self.combiner,
            granularity: self.first_level,
        }
    }

    pub fn city_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            members: self.level_members(Granularity::City),
            combiner: self.combiner,
            granularity: Granularity::City,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.first_level == Granularity::City {
            return Err(SpecError::CityFirstLevel(self.first_level));
        }
        if self.members.is_empty() {
            return Err(SpecError::EmptyMembers);
        }
        let mut seen = BTreeSet::new();
        for &m in &self.members {
            if !seen.insert(m) {
                return Err(SpecError::DuplicateMember(m));
            }
        }
        for level in [self.first_level, Granularity::City] {
            if self.level_members(level).is_empty() {
                return Err(SpecError::NoAdmissibleMembers(level));
            }
        }
        self.first_spec().validate()?;
        self.city_spec().validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BranchModel {
    /// The branch holds exactly one city; no model needed.
    Direct { city: String },
    Trained(TrainedEnsemble),
    /// No training users reached this branch. Predictions landing here get
    /// the branch's lexicographically smallest city so the final label
    /// still projects back to the first-level label.
    Empty { fallback_city: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedHierarchy {
    pub spec: HierarchySpec,
    pub first: TrainedEnsemble,
    pub branches: BTreeMap<String, BranchModel>,
}

pub fn train_hierarchy(
    spec: &HierarchySpec,
    users: &[UserRecord],
    ctx: &EnsembleContext,
    params: &TrainParams,
) -> Result<TrainedHierarchy, EnsembleTrainError> {
    spec.validate()?;
    let first = train_flat(&spec.first_spec(), users, ctx, params)?;

    let mut branch_cities: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for city in ctx.taxonomy.cities() {
        let label = ctx
            .taxonomy
            .project(&city.city_id, spec.first_level)
            .expect("taxonomy projection is total");
        branch_cities
            .entry(label)
            .or_default()
            .push(city.city_id.clone());
    }
    let mut branch_users: BTreeMap<String, Vec<UserRecord>> = BTreeMap::new();
    for user in users {
        let home = user
            .home_label
            .as_deref()
            .ok_or_else(|| TrainError::UnlabeledUser(user.user_id.clone()))?;
        let label = ctx
            .taxonomy
            .project(home, spec.first_level)
            .ok_or_else(|| TrainError::UnknownLabel(home.to_string()))?;
        branch_users.entry(label).or_default().push(user.clone());
    }

    let city_spec = spec.city_spec();
    let mut branches = BTreeMap::new();
    for (label, mut cities) in branch_cities {
        cities.sort();
        let branch = if cities.len() == 1 {
            BranchModel::Direct {
                city: cities.into_iter().next().unwrap(),
            }
        } else {
            match branch_users.get(&label) {
                Some(members) => BranchModel::Trained(train_flat(&city_spec, members, ctx, params)?),
                None => BranchModel::Empty {
                    fallback_city: cities.into_iter().next().unwrap(),
                },
            }
        };
        branches.insert(label, branch);
    }
    Ok(TrainedHierarchy {
        spec: spec.clone(),
        first,
        branches,
    })
}

/// Final city prediction plus the first-level step it was routed through.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierPrediction {
    pub city: Prediction,
    pub first_level: Prediction,
    pub first_fell_back: bool,
    pub city_fell_back: bool,
}

pub fn predict_hierarchical(
    hierarchy: &TrainedHierarchy,
    user: &UserRecord,
    ctx: &EnsembleContext,
) -> HierPrediction {
    let first = predict_flat(&hierarchy.first, user, ctx);
    let (city, city_fell_back) = match hierarchy.branches.get(&first.prediction.label) {
        Some(BranchModel::Direct { city }) => (
            Prediction {
                label: city.clone(),
                weight: 1.0,
                source: "hierarchy".to_string(),
            },
            false,
        ),
        Some(BranchModel::Trained(ens)) => {
            let p = predict_flat(ens, user, ctx);
            (p.prediction, p.fell_back)
        }
        Some(BranchModel::Empty { fallback_city }) => (
            Prediction {
                label: fallback_city.clone(),
                weight: 0.0,
                source: "fallback".to_string(),
            },
            true,
        ),
        // Unreachable when the first level was trained against the same
        // taxonomy; kept total for robustness.
        None => (
            Prediction {
                label: first.prediction.label.clone(),
                weight: 0.0,
                source: "fallback".to_string(),
            },
            true,
        ),
    };
    HierPrediction {
        city,
        first_level: first.prediction,
        first_fell_back: first.fell_back,
        city_fell_back,
    }
}

// ---------------------------------------------------------------------------
// Unified predictor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorSpec {
    Flat(EnsembleSpec),
    Hierarchical(HierarchySpec),
}

impl PredictorSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        match self {
            PredictorSpec::Flat(s) => s.validate(),
            PredictorSpec::Hierarchical(s) => s.validate(),
        }
    }

    /// Granularity of the labels this predictor emits. Hierarchies always
    /// finish at city.
    pub fn output_granularity(&self) -> Granularity {
        match self {
            PredictorSpec::Flat(s) => s.granularity,
            PredictorSpec::Hierarchical(_) => Granularity::City,
        }
    }

    pub fn members(&self) -> &[ClassifierId] {
        match self {
            PredictorSpec::Flat(s) => &s.members,
            PredictorSpec::Hierarchical(s) => &s.members,
        }
    }

    /// The same spec with one member removed; for knock-out comparisons.
    pub fn without_member(&self, member: ClassifierId) -> PredictorSpec {
        let drop = |members: &[ClassifierId]| {
            members
                .iter()
                .copied()
                .filter(|&m| m != member)
                .collect::<Vec<_>>()
        };
        match self {
            PredictorSpec::Flat(s) => PredictorSpec::Flat(EnsembleSpec {
                members: drop(&s.members),
                ..s.clone()
            }),
            PredictorSpec::Hierarchical(s) => PredictorSpec::Hierarchical(HierarchySpec {
                members: drop(&s.members),
                ..s.clone()
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedPredictor {
    Flat(TrainedEnsemble),
    Hierarchical(TrainedHierarchy),
}

impl TrainedPredictor {
    pub fn output_granularity(&self) -> Granularity {
        match self {
            TrainedPredictor::Flat(e) => e.spec.granularity,
            TrainedPredictor::Hierarchical(_) => Granularity::City,
        }
    }
}

pub fn train_predictor(
    spec: &PredictorSpec,
    users: &[UserRecord],
    ctx: &EnsembleContext,
    params: &TrainParams,
) -> Result<TrainedPredictor, EnsembleTrainError> {
    match spec {
        PredictorSpec::Flat(s) => Ok(TrainedPredictor::Flat(train_flat(s, users, ctx, params)?)),
        PredictorSpec::Hierarchical(s) => Ok(TrainedPredictor::Hierarchical(train_hierarchy(
            s, users, ctx, params,
        )?)),
    }
}

/// One user's final prediction from either predictor shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub prediction: Prediction,
    pub fell_back: bool,
}

pub fn predict_user(
    predictor: &TrainedPredictor,
    user: &UserRecord,
    ctx: &EnsembleContext,
) -> PredictionRecord {
    match predictor {
        TrainedPredictor::Flat(ens) => {
            let p = predict_flat(ens, user, ctx);
            PredictionRecord {
                prediction: p.prediction,
                fell_back: p.fell_back,
            }
        }
        TrainedPredictor::Hierarchical(h) => {
            let p = predict_hierarchical(h, user, ctx);
            PredictionRecord {
                prediction: p.city,
                fell_back: p.first_fell_back || p.city_fell_back,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CityEntry, Message, StateEntry, Venue};
    use chrono::{TimeZone, Utc};

    fn pred(label: &str, weight: f64) -> Prediction {
        Prediction {
            label: label.into(),
            weight,
            source: "test".into(),
        }
    }

    #[test]
    fn dynamic_combination_sums_weights() {
        let votes = vec![pred("boston", 0.5), pred("boston", 0.2), pred("nyc", 0.6)];
        let out = combine_dynamic(&votes, "fb");
        assert_eq!(out.label, "boston");
        assert!((out.weight - 0.7).abs() < 1e-12);
    }

    #[test]
    fn single_vote_wins_unopposed() {
        let out = combine_dynamic(&[pred("denver", 0.25)], "fb");
        assert_eq!(out.label, "denver");
    }

    #[test]
    fn empty_votes_fall_back() {
        let out = combine_dynamic(&[], "fb");
        assert_eq!(out.label, "fb");
        assert_eq!(out.weight, 0.0);
        assert_eq!(out.source, "fallback");
        assert_eq!(combine_majority(&[], "fb").label, "fb");
    }

    #[test]
    fn majority_counts_votes_not_weights() {
        let votes = vec![pred("boston", 0.1), pred("boston", 0.1), pred("nyc", 0.9)];
        assert_eq!(combine_majority(&votes, "fb").label, "boston");
        // Dynamic weighting disagrees on the same votes.
        assert_eq!(combine_dynamic(&votes, "fb").label, "nyc");
    }

    #[test]
    fn ties_break_lexicographically() {
        let votes = vec![pred("nyc", 0.5), pred("boston", 0.5)];
        assert_eq!(combine_dynamic(&votes, "fb").label, "boston");
        assert_eq!(combine_majority(&votes, "fb").label, "boston");
    }

    #[test]
    fn equal_weights_reduce_dynamic_to_majority() {
        let cases: Vec<Vec<Prediction>> = vec![
            vec![pred("a", 0.5), pred("b", 0.5), pred("b", 0.5)],
            vec![pred("c", 0.5)],
            vec![pred("a", 0.5), pred("b", 0.5)],
            vec![pred("b", 0.5), pred("b", 0.5), pred("a", 0.5), pred("c", 0.5)],
        ];
        for votes in cases {
            assert_eq!(
                combine_dynamic(&votes, "fb").label,
                combine_majority(&votes, "fb").label
            );
        }
    }

    #[test]
    fn combination_ignores_vote_order() {
        let votes = vec![pred("a", 0.3), pred("b", 0.4), pred("a", 0.2)];
        let reference = combine_dynamic(&votes, "fb");
        let permutations = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for perm in permutations {
            let shuffled: Vec<Prediction> = perm.iter().map(|&i| votes[i].clone()).collect();
            assert_eq!(combine_dynamic(&shuffled, "fb"), reference);
        }
    }

    #[test]
    fn spec_rejects_bad_member_combinations() {
        let spec = EnsembleSpec {
            members: vec![],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        assert_eq!(spec.validate().unwrap_err(), SpecError::EmptyMembers);

        let spec = EnsembleSpec {
            members: vec![ClassifierId::Words, ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        assert_eq!(
            spec.validate().unwrap_err(),
            SpecError::DuplicateMember(ClassifierId::Words)
        );

        let spec = EnsembleSpec {
            members: vec![ClassifierId::Behavior],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        assert!(matches!(
            spec.validate().unwrap_err(),
            SpecError::InadmissibleMember {
                member: ClassifierId::Behavior,
                ..
            }
        ));

        let spec = EnsembleSpec {
            members: vec![ClassifierId::LocalPlace],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::TimeZone,
        };
        assert!(spec.validate().is_err());

        let spec = EnsembleSpec {
            members: vec![ClassifierId::Behavior],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::TimeZone,
        };
        assert!(spec.validate().is_ok());
    }

    // -- end-to-end fixtures ------------------------------------------------

    fn taxonomy() -> LocationTaxonomy {
        LocationTaxonomy::from_entries(
            vec![
                CityEntry {
                    city_id: "boston_ma".into(),
                    name: "Boston".into(),
                    state_id: "MA".into(),
                    lat: 42.36,
                    lon: -71.06,
                },
                CityEntry {
                    city_id: "springfield_ma".into(),
                    name: "Springfield".into(),
                    state_id: "MA".into(),
                    lat: 42.10,
                    lon: -72.59,
                },
                CityEntry {
                    city_id: "denver_co".into(),
                    name: "Denver".into(),
                    state_id: "CO".into(),
                    lat: 39.74,
                    lon: -104.99,
                },
                CityEntry {
                    city_id: "boulder_co".into(),
                    name: "Boulder".into(),
                    state_id: "CO".into(),
                    lat: 40.01,
                    lon: -105.27,
                },
            ],
            vec![
                StateEntry {
                    state_id: "MA".into(),
                    timezone: "Eastern".into(),
                    census_region: "Northeast".into(),
                    federal_region: "Region I".into(),
                },
                StateEntry {
                    state_id: "CO".into(),
                    timezone: "Mountain".into(),
                    census_region: "West".into(),
                    federal_region: "Region VIII".into(),
                },
            ],
        )
        .unwrap()
    }

    fn gazetteer(tax: &LocationTaxonomy) -> Gazetteer {
        Gazetteer::from_entries(
            vec![
                ("Boston".into(), crate::corpus::PlaceRef::City("boston_ma".into())),
                (
                    "Springfield".into(),
                    crate::corpus::PlaceRef::City("springfield_ma".into()),
                ),
                ("Denver".into(), crate::corpus::PlaceRef::City("denver_co".into())),
                ("Boulder".into(), crate::corpus::PlaceRef::City("boulder_co".into())),
            ],
            tax,
        )
        .unwrap()
    }

    fn user(id: &str, home: &str, texts: &[&str]) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            home_label: Some(home.into()),
            messages: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Message {
                    text: (*t).to_string(),
                    created_at: Utc
                        .with_ymd_and_hms(2011, 7, 1, (i % 24) as u32, 0, 0)
                        .unwrap(),
                    geotag: None,
                    venue: None,
                })
                .collect(),
        }
    }

    /// Four cities, three users each, with city-specific vocabulary strong
    /// enough to pass local-term selection.
    fn training_users() -> Vec<UserRecord> {
        let mut users = Vec::new();
        for (city, word) in [
            ("boston_ma", "chowda"),
            ("springfield_ma", "basketball"),
            ("denver_co", "altitude"),
            ("boulder_co", "flatirons"),
        ] {
            for i in 0..3 {
                let text = format!("{word} {word} morning commute");
                users.push(user(&format!("{city}_{i}"), city, &[&text, &text]));
            }
        }
        users
    }

    fn ctx_parts() -> (LocationTaxonomy, Gazetteer, StopwordList) {
        let tax = taxonomy();
        let gaz = gazetteer(&tax);
        (tax, gaz, StopwordList::default_english())
    }

    #[test]
    fn flat_ensemble_classifies_and_falls_back() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let spec = EnsembleSpec {
            members: vec![ClassifierId::Words, ClassifierId::LocalPlace],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        let ens = train_flat(&spec, &training_users(), &ctx, &TrainParams::default()).unwrap();
        assert!(ens.disabled_members.is_empty());

        let probe = user("p", "boston_ma", &["chowda chowda tonight", "boston boston"]);
        let out = predict_flat(&ens, &probe, &ctx);
        assert_eq!(out.prediction.label, "boston_ma");
        assert!(!out.fell_back);
        assert_eq!(out.votes.len(), 2);

        // Nothing but stopwords: every member abstains.
        let blank = user("q", "boston_ma", &["the and of"]);
        let out = predict_flat(&ens, &blank, &ctx);
        assert!(out.fell_back);
        assert_eq!(out.prediction.label, ens.fallback_label);
        assert!(out.votes.is_empty());
    }

    #[test]
    fn heuristic_votes_stay_inside_the_training_labels() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let spec = EnsembleSpec {
            members: vec![ClassifierId::Words, ClassifierId::LocalPlace],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        // Train on the Massachusetts users only; Denver stays resolvable
        // through the gazetteer but is not a label this model ever saw.
        let users: Vec<UserRecord> = training_users()
            .into_iter()
            .filter(|u| u.home_label.as_deref().unwrap().ends_with("_ma"))
            .collect();
        let ens = train_flat(&spec, &users, &ctx, &TrainParams::default()).unwrap();
        assert_eq!(ens.label_pool.len(), 2);

        let probe = user("p", "boston_ma", &["denver denver denver"]);
        let out = predict_flat(&ens, &probe, &ctx);
        assert!(
            out.votes.iter().all(|v| v.label != "denver_co"),
            "place mentions outside the training labels must not vote"
        );
        assert_ne!(out.prediction.label, "denver_co");

        let probe = user("q", "boston_ma", &["boston tonight"]);
        let out = predict_flat(&ens, &probe, &ctx);
        assert!(out
            .votes
            .iter()
            .any(|v| v.label == "boston_ma" && v.source == "localplace"));
    }

    #[test]
    fn members_without_signal_are_disabled_not_fatal() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        // The corpus has no hashtags at all.
        let spec = EnsembleSpec {
            members: vec![ClassifierId::Words, ClassifierId::Hashtags],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        let ens = train_flat(&spec, &training_users(), &ctx, &TrainParams::default()).unwrap();
        assert_eq!(ens.disabled_members, vec![ClassifierId::Hashtags]);

        // A disabled member behaves exactly like an absent one.
        let words_only = EnsembleSpec {
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        let reference = train_flat(&words_only, &training_users(), &ctx, &TrainParams::default())
            .unwrap();
        for probe in training_users() {
            assert_eq!(
                predict_flat(&ens, &probe, &ctx).prediction,
                predict_flat(&reference, &probe, &ctx).prediction
            );
        }
    }

    #[test]
    fn single_statistical_unifies_the_three_families() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let mut users = training_users();
        // Give each city a hashtag and a place mention so all families
        // produce local terms.
        for u in users.iter_mut() {
            let (tag, place) = match u.home_label.as_deref().unwrap() {
                "boston_ma" => ("#sox", "boston"),
                "springfield_ma" => ("#hoops", "springfield"),
                "denver_co" => ("#mile", "denver"),
                _ => ("#climb", "boulder"),
            };
            u.messages[0].text = format!("{} {} {}", u.messages[0].text, tag, place);
        }
        let model =
            train_single_statistical(&users, Granularity::City, &ctx, &TrainParams::default())
                .unwrap();
        let words: Vec<&String> = model
            .vocabulary
            .iter()
            .filter(|t| t.starts_with("words:"))
            .collect();
        let tags: Vec<&String> = model
            .vocabulary
            .iter()
            .filter(|t| t.starts_with("hashtags:"))
            .collect();
        let places: Vec<&String> = model
            .vocabulary
            .iter()
            .filter(|t| t.starts_with("placenames:"))
            .collect();
        assert_eq!(
            words.len() + tags.len() + places.len(),
            model.vocabulary.len()
        );
        assert!(!words.is_empty() && !tags.is_empty() && !places.is_empty());
    }

    #[test]
    fn hierarchy_routes_through_branches() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let spec = HierarchySpec {
            first_level: Granularity::TimeZone,
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
        };
        let users = training_users();
        let h = train_hierarchy(&spec, &users, &ctx, &TrainParams::default()).unwrap();
        assert_eq!(h.branches.len(), 2);
        assert!(matches!(
            h.branches.get("Eastern"),
            Some(BranchModel::Trained(_))
        ));

        // Every prediction's city projects back to the first-level label.
        for probe in &users {
            let p = predict_hierarchical(&h, probe, &ctx);
            assert_eq!(
                tax.project(&p.city.label, Granularity::TimeZone).unwrap(),
                p.first_level.label
            );
        }
        let p = predict_hierarchical(&h, &users[0], &ctx);
        assert_eq!(p.city.label, "boston_ma");
    }

    #[test]
    fn single_city_branches_map_directly() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        // Census regions split 2/2 like zones; federal regions do too. Use
        // a state-level hierarchy where each state has two cities, then
        // check a taxonomy whose region has one city via a reduced corpus.
        let spec = HierarchySpec {
            first_level: Granularity::State,
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
        };
        let h = train_hierarchy(&spec, &training_users(), &ctx, &TrainParams::default()).unwrap();
        assert_eq!(h.branches.len(), 2);

        // A taxonomy where CO has a single city makes that branch direct.
        let tax_small = LocationTaxonomy::from_entries(
            vec![
                CityEntry {
                    city_id: "boston_ma".into(),
                    name: "Boston".into(),
                    state_id: "MA".into(),
                    lat: 42.36,
                    lon: -71.06,
                },
                CityEntry {
                    city_id: "springfield_ma".into(),
                    name: "Springfield".into(),
                    state_id: "MA".into(),
                    lat: 42.10,
                    lon: -72.59,
                },
                CityEntry {
                    city_id: "denver_co".into(),
                    name: "Denver".into(),
                    state_id: "CO".into(),
                    lat: 39.74,
                    lon: -104.99,
                },
            ],
            vec![
                StateEntry {
                    state_id: "MA".into(),
                    timezone: "Eastern".into(),
                    census_region: "Northeast".into(),
                    federal_region: "Region I".into(),
                },
                StateEntry {
                    state_id: "CO".into(),
                    timezone: "Mountain".into(),
                    census_region: "West".into(),
                    federal_region: "Region VIII".into(),
                },
            ],
        )
        .unwrap();
        let gaz_small = Gazetteer::from_entries(
            vec![("Boston".into(), crate::corpus::PlaceRef::City("boston_ma".into()))],
            &tax_small,
        )
        .unwrap();
        let ctx_small = EnsembleContext {
            taxonomy: &tax_small,
            gazetteer: &gaz_small,
            stopwords: &stop,
        };
        let users: Vec<UserRecord> = training_users()
            .into_iter()
            .filter(|u| u.home_label.as_deref() != Some("boulder_co"))
            .collect();
        let h = train_hierarchy(&spec, &users, &ctx_small, &TrainParams::default()).unwrap();
        assert!(matches!(
            h.branches.get("CO"),
            Some(BranchModel::Direct { city }) if city == "denver_co"
        ));
    }

    #[test]
    fn unpopulated_branches_fall_back_inside_the_branch() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let spec = HierarchySpec {
            first_level: Granularity::TimeZone,
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
        };
        // Only Eastern users; the Mountain branch has cities but no data.
        let users: Vec<UserRecord> = training_users()
            .into_iter()
            .filter(|u| u.home_label.as_deref().unwrap().ends_with("_ma"))
            .collect();
        let h = train_hierarchy(&spec, &users, &ctx, &TrainParams::default()).unwrap();
        assert!(matches!(
            h.branches.get("Mountain"),
            Some(BranchModel::Empty { fallback_city }) if fallback_city == "boulder_co"
        ));
    }

    #[test]
    fn hierarchy_spec_validation_filters_pools() {
        let spec = HierarchySpec {
            first_level: Granularity::TimeZone,
            members: vec![ClassifierId::Behavior],
            combiner: Combiner::DynamicWeighted,
        };
        // Behavior cannot emit cities, so the second level has no members.
        assert_eq!(
            spec.validate().unwrap_err(),
            SpecError::NoAdmissibleMembers(Granularity::City)
        );

        let spec = HierarchySpec {
            first_level: Granularity::City,
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
        };
        assert!(matches!(
            spec.validate().unwrap_err(),
            SpecError::CityFirstLevel(_)
        ));

        // Behavior joins the zone level and is left out of city branches.
        let spec = HierarchySpec {
            first_level: Granularity::TimeZone,
            members: vec![ClassifierId::Words, ClassifierId::Behavior],
            combiner: Combiner::DynamicWeighted,
        };
        assert!(spec.validate().is_ok());
        assert_eq!(
            spec.first_spec().members,
            vec![ClassifierId::Words, ClassifierId::Behavior]
        );
        assert_eq!(spec.city_spec().members, vec![ClassifierId::Words]);
    }

    #[test]
    fn visit_history_member_votes_from_checkins() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let spec = EnsembleSpec {
            members: vec![ClassifierId::Words, ClassifierId::VisitHistory],
            combiner: Combiner::DynamicWeighted,
            granularity: Granularity::City,
        };
        let ens = train_flat(&spec, &training_users(), &ctx, &TrainParams::default()).unwrap();
        let mut probe = user("p", "denver_co", &["nothing local at all"]);
        probe.messages[0].venue = Some(Venue {
            city: "Denver".into(),
            state: "CO".into(),
        });
        let out = predict_flat(&ens, &probe, &ctx);
        assert_eq!(out.prediction.label, "denver_co");
        assert_eq!(out.votes.len(), 1);
        assert_eq!(out.votes[0].source, "visithistory");
    }

    #[test]
    fn trained_predictor_serializes_round_trip() {
        let (tax, gaz, stop) = ctx_parts();
        let ctx = EnsembleContext {
            taxonomy: &tax,
            gazetteer: &gaz,
            stopwords: &stop,
        };
        let spec = PredictorSpec::Hierarchical(HierarchySpec {
            first_level: Granularity::TimeZone,
            members: vec![ClassifierId::Words],
            combiner: Combiner::DynamicWeighted,
        });
        let users = training_users();
        let trained = train_predictor(&spec, &users, &ctx, &TrainParams::default()).unwrap();
        let json = serde_json::to_string(&trained).unwrap();
        let back: TrainedPredictor = serde_json::from_str(&json).unwrap();
        for probe in &users {
            assert_eq!(
                predict_user(&back, probe, &ctx),
                predict_user(&trained, probe, &ctx)
            );
        }
        assert_eq!(back.output_granularity(), Granularity::City);
    }
}
