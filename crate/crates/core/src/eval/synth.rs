//! Seeded synthetic corpus generation.
//!
//! Users get planted zone- and city-level vocabulary, diurnal posting
//! profiles offset per zone, optional geotags and check-ins, and an
//! optional traveler population whose geotags are displaced beyond a
//! distance threshold while their home label stays put. Everything is
//! deterministic under the spec's seed.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{
    CityEntry, Gazetteer, GeoPoint, LocationTaxonomy, Message, PlaceRef, StateEntry, UserRecord,
    Venue,
};
use crate::movement::EARTH_RADIUS_MILES;

/// Knobs for the generator. Rates are probabilities per message.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub users_per_city: u32,
    pub messages_per_user: u32,
    /// Background (non-localized) words per message.
    pub words_per_message: u32,
    pub zone_word_rate: f64,
    pub city_word_rate: f64,
    pub hashtag_rate: f64,
    pub placename_rate: f64,
    pub checkin_rate: f64,
    pub geotag_rate: f64,
    /// Probability that a planted word comes from the user's confusion city
    /// (one fixed other location per user) instead of their own.
    /// Concentrating the borrowed vocabulary on one city is what lets the
    /// word family overrule the rest of a user's evidence.
    pub leakage: f64,
    /// Leak rate for explicit place markers: city hashtags, city-name
    /// mentions, and check-in venues. Tagging or naming a place you are not
    /// at is much rarer than borrowing its slang, so this stays well below
    /// `leakage`.
    pub venue_leakage: f64,
    pub zone_vocab: u32,
    pub city_vocab: u32,
    pub hashtags_per_city: u32,
    pub background_vocab: u32,
    /// Diurnal peak shift between consecutive zones, in minutes.
    pub diurnal_offset_minutes: u32,
    /// Exponent sharpening the cosine activity profile; 0 is uniform.
    pub diurnal_sharpness: f64,
    pub days_span: u32,
    pub traveler_fraction: f64,
    pub traveler_displacement_miles: f64,
    /// The distance rule travelers must violate; displacement must exceed
    /// it.
    pub travel_threshold_miles: f64,
    /// Probability per traveler message of an extra travel-talk term.
    pub travel_term_rate: f64,
    /// Probability per traveler message that planted markers come from the
    /// away city instead of home.
    pub content_confusion: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users_per_city: 50,
            messages_per_user: 80,
            words_per_message: 6,
            zone_word_rate: 0.35,
            city_word_rate: 0.35,
            hashtag_rate: 0.04,
            placename_rate: 0.02,
            checkin_rate: 0.02,
            geotag_rate: 0.3,
            leakage: 0.45,
            venue_leakage: 0.03,
            zone_vocab: 24,
            city_vocab: 150,
            hashtags_per_city: 30,
            background_vocab: 600,
            diurnal_offset_minutes: 180,
            diurnal_sharpness: 3.0,
            days_span: 30,
            traveler_fraction: 0.0,
            traveler_displacement_miles: 150.0,
            travel_threshold_miles: 100.0,
            travel_term_rate: 0.35,
            content_confusion: 0.6,
            seed: 7,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("users_per_city must be at least 1")]
    NoUsers,
    #[error("messages_per_user must be at least 1")]
    NoMessages,
    #[error("travelers need at least 2 messages to carry both geotags")]
    TooFewMessagesForTravel,
    #[error("{name} must lie in [0, 1], got {value}")]
    BadRate { name: &'static str, value: f64 },
    #[error("diurnal_sharpness must be finite and non-negative, got {0}")]
    BadSharpness(f64),
    #[error(
        "traveler displacement ({displacement} mi) must exceed the travel threshold ({threshold} mi)"
    )]
    TravelerNotDisplaced { displacement: f64, threshold: f64 },
    #[error("taxonomy has no cities to populate")]
    EmptyTaxonomy,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.users_per_city == 0 {
            return Err(SynthError::NoUsers);
        }
        if self.messages_per_user == 0 {
            return Err(SynthError::NoMessages);
        }
        for (name, value) in [
            ("zone_word_rate", self.zone_word_rate),
            ("city_word_rate", self.city_word_rate),
            ("hashtag_rate", self.hashtag_rate),
            ("placename_rate", self.placename_rate),
            ("checkin_rate", self.checkin_rate),
            ("geotag_rate", self.geotag_rate),
            ("leakage", self.leakage),
            ("venue_leakage", self.venue_leakage),
            ("traveler_fraction", self.traveler_fraction),
            ("travel_term_rate", self.travel_term_rate),
            ("content_confusion", self.content_confusion),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(SynthError::BadRate { name, value });
            }
        }
        if !self.diurnal_sharpness.is_finite() || self.diurnal_sharpness < 0.0 {
            return Err(SynthError::BadSharpness(self.diurnal_sharpness));
        }
        if self.traveler_fraction > 0.0 {
            if self.traveler_displacement_miles <= self.travel_threshold_miles {
                return Err(SynthError::TravelerNotDisplaced {
                    displacement: self.traveler_displacement_miles,
                    threshold: self.travel_threshold_miles,
                });
            }
            if self.messages_per_user < 2 {
                return Err(SynthError::TooFewMessagesForTravel);
            }
        }
        Ok(())
    }
}

/// What the generator planted, for decoding in tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBookkeeping {
    pub zone_words: BTreeMap<String, Vec<String>>,
    pub city_words: BTreeMap<String, Vec<String>>,
    pub city_hashtags: BTreeMap<String, Vec<String>>,
    pub travel_terms: Vec<String>,
    /// Users generated with displaced geotags and confused content.
    pub travelers: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub users: Vec<UserRecord>,
    pub bookkeeping: SynthBookkeeping,
}

const TRAVEL_TERMS: [&str; 3] = ["flight", "airport", "hotel"];
const MILES_PER_LAT_DEGREE: f64 = std::f64::consts::PI / 180.0 * EARTH_RADIUS_MILES;
const BASE_PEAK_MINUTE: u32 = 780;

/// Minute-of-day from the zone's cosine activity profile via rejection
/// sampling; sharpness 0 degenerates to uniform.
fn sample_minute(rng: &mut ChaCha8Rng, peak: u32, sharpness: f64) -> u32 {
    loop {
        let minute = rng.gen_range(0u32..1440);
        let phase = (minute as f64 - peak as f64) / 1440.0 * std::f64::consts::TAU;
        let density = (0.5 + 0.5 * phase.cos()).powf(sharpness);
        if rng.gen::<f64>() < density {
            return minute;
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, point: GeoPoint) -> GeoPoint {
    GeoPoint {
        lat: (point.lat + rng.gen_range(-0.01..0.01)).clamp(-89.9, 89.9),
        lon: (point.lon + rng.gen_range(-0.01..0.01)).clamp(-179.9, 179.9),
    }
}

/// Pick an index other than `own` uniformly; `n` must be at least 2.
fn other_index(rng: &mut ChaCha8Rng, own: usize, n: usize) -> usize {
    let pick = rng.gen_range(0..n - 1);
    if pick >= own {
        pick + 1
    } else {
        pick
    }
}

pub fn synthesize_corpus(
    spec: &SynthSpec,
    taxonomy: &LocationTaxonomy,
) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let cities: Vec<&CityEntry> = taxonomy.cities().collect();
    if cities.is_empty() {
        return Err(SynthError::EmptyTaxonomy);
    }
    let zones: Vec<String> = taxonomy
        .states()
        .map(|s| s.timezone.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let zone_index: BTreeMap<&str, usize> = zones
        .iter()
        .enumerate()
        .map(|(i, z)| (z.as_str(), i))
        .collect();
    let zone_of_city: Vec<usize> = cities
        .iter()
        .map(|c| zone_index[taxonomy.state(&c.state_id).unwrap().timezone.as_str()])
        .collect();

    let zone_words: Vec<Vec<String>> = (0..zones.len())
        .map(|zi| {
            (0..spec.zone_vocab)
                .map(|j| format!("z{zi}term{j}"))
                .collect()
        })
        .collect();
    let city_words: Vec<Vec<String>> = (0..cities.len())
        .map(|k| {
            (0..spec.city_vocab)
                .map(|j| format!("c{k}term{j}"))
                .collect()
        })
        .collect();
    let city_hashtags: Vec<Vec<String>> = (0..cities.len())
        .map(|k| {
            (0..spec.hashtags_per_city)
                .map(|j| format!("#tag{k}n{j}"))
                .collect()
        })
        .collect();
    let background: Vec<String> = (0..spec.background_vocab.max(1))
        .map(|i| format!("bkg{i}"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base_time = Utc.with_ymd_and_hms(2011, 6, 1, 0, 0, 0).unwrap();
    let mut users = Vec::with_capacity(cities.len() * spec.users_per_city as usize);
    let mut travelers = BTreeSet::new();

    for (home_idx, home) in cities.iter().enumerate() {
        let home_zone = zone_of_city[home_idx];
        let peak = (BASE_PEAK_MINUTE + home_zone as u32 * spec.diurnal_offset_minutes) % 1440;
        let home_point = GeoPoint {
            lat: home.lat,
            lon: home.lon,
        };
        for u in 0..spec.users_per_city {
            let user_id = format!("{}-u{u:03}", home.city_id);
            let traveling =
                spec.traveler_fraction > 0.0 && rng.gen::<f64>() < spec.traveler_fraction;
            let away_idx = if cities.len() > 1 {
                other_index(&mut rng, home_idx, cities.len())
            } else {
                home_idx
            };
            // Vocabulary borrowing concentrates on one other location per
            // family (a hometown, a rival, a team) rather than spreading
            // uniformly. Zone slang has its own source, independent of the
            // city one, so the two word families do not fail in lockstep.
            let noise_word_idx = if cities.len() > 1 {
                other_index(&mut rng, home_idx, cities.len())
            } else {
                home_idx
            };
            let noise_tag_idx = if cities.len() > 1 {
                other_index(&mut rng, home_idx, cities.len())
            } else {
                home_idx
            };
            let noise_zone = if zones.len() > 1 {
                other_index(&mut rng, home_zone, zones.len())
            } else {
                home_zone
            };
            let displaced = GeoPoint {
                lat: {
                    let delta = spec.traveler_displacement_miles * 1.1 / MILES_PER_LAT_DEGREE;
                    if home.lat + delta <= 89.0 {
                        home.lat + delta
                    } else {
                        home.lat - delta
                    }
                },
                lon: home.lon,
            };
            if traveling {
                travelers.insert(user_id.clone());
            }

            let mut messages = Vec::with_capacity(spec.messages_per_user as usize);
            for m in 0..spec.messages_per_user {
                let day = rng.gen_range(0..spec.days_span.max(1));
                let minute = sample_minute(&mut rng, peak, spec.diurnal_sharpness);
                let second = rng.gen_range(0u32..60);
                let created_at = base_time
                    + Duration::seconds((day as i64 * 1440 + minute as i64) * 60 + second as i64);

                let confused = traveling && rng.gen::<f64>() < spec.content_confusion;
                let source_idx = if confused { away_idx } else { home_idx };
                let source_zone = zone_of_city[source_idx];

                let mut tokens: Vec<String> = (0..spec.words_per_message)
                    .map(|_| background[rng.gen_range(0..background.len())].clone())
                    .collect();
                if rng.gen::<f64>() < spec.zone_word_rate {
                    let zi = if rng.gen::<f64>() < spec.leakage {
                        noise_zone
                    } else {
                        source_zone
                    };
                    tokens.push(zone_words[zi][rng.gen_range(0..zone_words[zi].len())].clone());
                }
                if rng.gen::<f64>() < spec.city_word_rate {
                    let k = if rng.gen::<f64>() < spec.leakage {
                        noise_word_idx
                    } else {
                        source_idx
                    };
                    tokens.push(city_words[k][rng.gen_range(0..city_words[k].len())].clone());
                }
                if rng.gen::<f64>() < spec.hashtag_rate {
                    let k = if rng.gen::<f64>() < spec.venue_leakage {
                        noise_tag_idx
                    } else {
                        source_idx
                    };
                    tokens
                        .push(city_hashtags[k][rng.gen_range(0..city_hashtags[k].len())].clone());
                }
                if rng.gen::<f64>() < spec.placename_rate {
                    let k = if cities.len() > 1 && rng.gen::<f64>() < spec.venue_leakage {
                        other_index(&mut rng, source_idx, cities.len())
                    } else {
                        source_idx
                    };
                    tokens.push(cities[k].name.to_lowercase());
                }
                if traveling && rng.gen::<f64>() < spec.travel_term_rate {
                    tokens.push(TRAVEL_TERMS[rng.gen_range(0..TRAVEL_TERMS.len())].to_string());
                }

                let venue = if rng.gen::<f64>() < spec.checkin_rate {
                    let k = if cities.len() > 1 && rng.gen::<f64>() < spec.venue_leakage {
                        other_index(&mut rng, source_idx, cities.len())
                    } else {
                        source_idx
                    };
                    Some(Venue {
                        city: cities[k].name.clone(),
                        state: cities[k].state_id.clone(),
                    })
                } else {
                    None
                };

                let geotag = if traveling && m == 0 {
                    Some(jitter(&mut rng, home_point))
                } else if traveling && m == 1 {
                    Some(jitter(&mut rng, displaced))
                } else if rng.gen::<f64>() < spec.geotag_rate {
                    let base = if traveling && rng.gen_bool(0.5) {
                        displaced
                    } else {
                        home_point
                    };
                    Some(jitter(&mut rng, base))
                } else {
                    None
                };

                messages.push(Message {
                    text: tokens.join(" "),
                    created_at,
                    geotag,
                    venue,
                });
            }
            messages.sort_by(|a, b| b.created_at.cmp(&a.created_at));
            users.push(UserRecord {
                user_id,
                home_label: Some(home.city_id.clone()),
                messages,
            });
        }
    }

    let bookkeeping = SynthBookkeeping {
        zone_words: zones
            .iter()
            .enumerate()
            .map(|(zi, z)| (z.clone(), zone_words[zi].clone()))
            .collect(),
        city_words: cities
            .iter()
            .enumerate()
            .map(|(k, c)| (c.city_id.clone(), city_words[k].clone()))
            .collect(),
        city_hashtags: cities
            .iter()
            .enumerate()
            .map(|(k, c)| (c.city_id.clone(), city_hashtags[k].clone()))
            .collect(),
        travel_terms: TRAVEL_TERMS.iter().map(|t| t.to_string()).collect(),
        travelers,
    };
    Ok(SynthCorpus { users, bookkeeping })
}

// ---------------------------------------------------------------------------
// Demo taxonomy and gazetteer
// ---------------------------------------------------------------------------

const ZONES: [(&str, &str, &str); 4] = [
    ("Eastern", "eastern", "Northeast"),
    ("Central", "central", "Midwest"),
    ("Mountain", "mountain", "South"),
    ("Pacific", "pacific", "West"),
];

/// A four-zone taxonomy with `cities_per_zone` cities each. Cities pair up
/// into states (an odd last city gets a single-city state), each zone maps
/// to one census region, and states spread over two federal regions per
/// zone.
pub fn demo_taxonomy(cities_per_zone: usize) -> LocationTaxonomy {
    assert!(cities_per_zone >= 1, "need at least one city per zone");
    let mut cities = Vec::new();
    let mut states = Vec::new();
    for (zi, (zone, zone_lower, census)) in ZONES.iter().enumerate() {
        let state_count = cities_per_zone.div_ceil(2);
        for si in 0..state_count {
            states.push(StateEntry {
                state_id: format!("{}{si}", zone.chars().next().unwrap()),
                timezone: zone.to_string(),
                census_region: census.to_string(),
                federal_region: format!("FR{}", zi * 2 + si % 2 + 1),
            });
        }
        for ci in 0..cities_per_zone {
            cities.push(CityEntry {
                city_id: format!("{zone_lower}_{ci}"),
                name: format!("{zone}ville{ci}"),
                state_id: format!("{}{}", zone.chars().next().unwrap(), ci / 2),
                lat: 32.0 + 2.5 * ci as f64,
                lon: -70.0 - 13.0 * zi as f64,
            });
        }
    }
    LocationTaxonomy::from_entries(cities, states).expect("demo taxonomy is well-formed")
}

/// One gazetteer entry per demo city, keyed by its display name.
pub fn demo_gazetteer(taxonomy: &LocationTaxonomy) -> Gazetteer {
    let entries: Vec<(String, PlaceRef)> = taxonomy
        .cities()
        .map(|c| (c.name.clone(), PlaceRef::City(c.city_id.clone())))
        .collect();
    Gazetteer::from_entries(entries, taxonomy).expect("demo gazetteer references demo cities")
}
