//! Heuristic classifiers: place mentions and check-in visit history.
//!
//! Both count evidence occurrences per location and take the most frequent
//! one. The vote weight is 1 over the number of distinct locations with any
//! evidence, mirroring the statistical classifiers' strength rule.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{Gazetteer, Granularity, LocationTaxonomy, Message, PlaceRef, UserRecord, Venue};
use crate::features::{place_name_matches, tokenize};

use super::{ClassOutcome, Prediction};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeuristicError {
    #[error("place-mention classification supports city or state granularity, not {0}")]
    UnsupportedGranularity(Granularity),
}

fn outcome_from_counts(counts: BTreeMap<String, u32>, source: &str) -> Option<ClassOutcome> {
    if counts.is_empty() {
        return None;
    }
    let mut best: Option<(&str, u32)> = None;
    for (label, &c) in &counts {
        match best {
            Some((_, bc)) if c <= bc => {}
            _ => best = Some((label, c)),
        }
    }
    let (label, _) = best.unwrap();
    let matching = counts.len();
    Some(ClassOutcome {
        prediction: Prediction {
            label: label.to_string(),
            weight: 1.0 / matching as f64,
            source: source.to_string(),
        },
        matching,
    })
}

/// Classifies by gazetteer place mentions across all of a user's messages.
/// Ambiguous surface forms credit every candidate target. Only city and
/// state granularities are meaningful: a mention names a place, not a
/// region. At state granularity city mentions project to their state; at
/// city granularity state mentions carry no city evidence and are skipped.
pub fn classify_local_place(
    user: &UserRecord,
    granularity: Granularity,
    gazetteer: &Gazetteer,
    taxonomy: &LocationTaxonomy,
) -> Result<Option<ClassOutcome>, HeuristicError> {
    if !matches!(granularity, Granularity::City | Granularity::State) {
        return Err(HeuristicError::UnsupportedGranularity(granularity));
    }
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for m in &user.messages {
        for surface in place_name_matches(&tokenize(&m.text), gazetteer) {
            for target in gazetteer.lookup(&surface).into_iter().flatten() {
                let label = match (target, granularity) {
                    (PlaceRef::City(id), Granularity::City) => Some(id.clone()),
                    (PlaceRef::City(id), Granularity::State) => {
                        taxonomy.project(id, Granularity::State)
                    }
                    (PlaceRef::State(_), Granularity::City) => None,
                    (PlaceRef::State(id), Granularity::State) => Some(id.clone()),
                    _ => unreachable!("granularity checked above"),
                };
                if let Some(label) = label {
                    *counts.entry(label).or_default() += 1;
                }
            }
        }
    }
    Ok(outcome_from_counts(counts, "localplace"))
}

/// Resolves a message to a check-in venue. The default implementation reads
/// the venue carried on the message itself; richer resolvers can plug in.
pub trait VenueResolver {
    fn resolve(&self, message: &Message) -> Option<Venue>;
}

/// Uses the pre-resolved venue fields already present on each message.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreResolvedVenues;

impl VenueResolver for PreResolvedVenues {
    fn resolve(&self, message: &Message) -> Option<Venue> {
        message.venue.clone()
    }
}

/// Visit-history classification result plus a tally of venues that did not
/// resolve to any taxonomy city.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitHistory {
    pub outcome: Option<ClassOutcome>,
    pub unknown_venues: u32,
}

/// Classifies by check-in venues: each resolved venue projects to the
/// requested granularity and the most visited location wins. Workable at
/// any granularity since venues resolve to cities first.
pub fn classify_visit_history(
    user: &UserRecord,
    granularity: Granularity,
    resolver: &dyn VenueResolver,
    taxonomy: &LocationTaxonomy,
) -> VisitHistory {
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut unknown = 0u32;
    for m in &user.messages {
        let Some(venue) = resolver.resolve(m) else {
            continue;
        };
        match taxonomy.resolve_venue(&venue.city, &venue.state) {
            Some(city_id) => {
                let label = taxonomy
                    .project(city_id, granularity)
                    .expect("resolved venue city is always projectable");
                *counts.entry(label).or_default() += 1;
            }
            None => unknown += 1,
        }
    }
    VisitHistory {
        outcome: outcome_from_counts(counts, "visithistory"),
        unknown_venues: unknown,
    }
}
