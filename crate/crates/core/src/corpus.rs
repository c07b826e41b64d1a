//! Corpus ingestion, the location taxonomy, and evaluation fold splitting.
//!
//! A corpus is a line-delimited file of user records. Each record carries a
//! user id, an optional home city label, and the user's messages (text, UTC
//! timestamp, optional geotag, optional pre-resolved check-in venue). The
//! taxonomy maps every city to a state and every state to a time zone, a
//! census region, and a federal region, so any city label can be projected
//! to a coarser granularity without extra lookups.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::tokenize;

/// Granularities a home location can be reported at, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Granularity {
    #[serde(rename = "city")]
    City,
    #[serde(rename = "state")]
    State,
    #[serde(rename = "timezone")]
    TimeZone,
    #[serde(rename = "census")]
    CensusRegion,
    #[serde(rename = "federal")]
    FederalRegion,
}

impl Granularity {
    pub const ALL: [Granularity; 5] = [
        Granularity::City,
        Granularity::State,
        Granularity::TimeZone,
        Granularity::CensusRegion,
        Granularity::FederalRegion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::City => "city",
            Granularity::State => "state",
            Granularity::TimeZone => "timezone",
            Granularity::CensusRegion => "census",
            Granularity::FederalRegion => "federal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "city" => Some(Granularity::City),
            "state" => Some(Granularity::State),
            "timezone" | "time_zone" => Some(Granularity::TimeZone),
            "census" | "census_region" => Some(Granularity::CensusRegion),
            "federal" | "federal_region" => Some(Granularity::FederalRegion),
            _ => None,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A latitude/longitude pair in degrees. Always within range once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Returns `None` unless both coordinates are finite and in range.
    pub fn checked(lat: f64, lon: f64) -> Option<Self> {
        let ok = lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0;
        ok.then_some(GeoPoint { lat, lon })
    }
}

/// A pre-resolved check-in venue: display city name plus state id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Venue {
    pub city: String,
    pub state: String,
}

/// One message: text, UTC creation time, optional geotag and venue.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub geotag: Option<GeoPoint>,
    pub venue: Option<Venue>,
}

/// One user: unique id, messages ordered newest first, optional home city.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub user_id: String,
    pub home_label: Option<String>,
    pub messages: Vec<Message>,
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CityEntry {
    pub city_id: String,
    pub name: String,
    pub state_id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateEntry {
    pub state_id: String,
    pub timezone: String,
    pub census_region: String,
    pub federal_region: String,
}

/// City and state tables with region assignments. Every city maps to exactly
/// one state and every state to exactly one label per coarse granularity.
#[derive(Debug, Clone)]
pub struct LocationTaxonomy {
    cities: BTreeMap<String, CityEntry>,
    states: BTreeMap<String, StateEntry>,
    // (lowercased display name, state id) -> city id, for venue resolution.
    venue_index: HashMap<(String, String), String>,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("failed to read taxonomy {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate city id '{0}'")]
    DuplicateCity(String),
    #[error("duplicate state id '{0}'")]
    DuplicateState(String),
    #[error("city '{city}' references unknown state '{state}'")]
    DanglingState { city: String, state: String },
    #[error("coordinates out of range for city '{0}'")]
    CoordinateRange(String),
    #[error("state '{state}' has an empty {field} assignment")]
    MissingRegion { state: String, field: &'static str },
    #[error("taxonomy defines no cities")]
    Empty,
}

impl LocationTaxonomy {
    /// Builds and validates a taxonomy from raw entries.
    pub fn from_entries(
        cities: Vec<CityEntry>,
        states: Vec<StateEntry>,
    ) -> Result<Self, TaxonomyError> {
        let mut state_map = BTreeMap::new();
        for s in states {
            if s.state_id.is_empty() {
                return Err(TaxonomyError::Parse {
                    line: 0,
                    reason: "empty state id".into(),
                });
            }
            for (field, value) in [
                ("timezone", &s.timezone),
                ("census region", &s.census_region),
                ("federal region", &s.federal_region),
            ] {
                if value.is_empty() {
                    return Err(TaxonomyError::MissingRegion {
                        state: s.state_id.clone(),
                        field,
                    });
                }
            }
            if state_map.contains_key(&s.state_id) {
                return Err(TaxonomyError::DuplicateState(s.state_id));
            }
            state_map.insert(s.state_id.clone(), s);
        }
        let mut city_map = BTreeMap::new();
        for c in cities {
            if c.city_id.is_empty() || c.name.is_empty() {
                return Err(TaxonomyError::Parse {
                    line: 0,
                    reason: "city entries need a non-empty id and name".into(),
                });
            }
            if GeoPoint::checked(c.lat, c.lon).is_none() {
                return Err(TaxonomyError::CoordinateRange(c.city_id));
            }
            if !state_map.contains_key(&c.state_id) {
                return Err(TaxonomyError::DanglingState {
                    city: c.city_id,
                    state: c.state_id,
                });
            }
            if city_map.contains_key(&c.city_id) {
                return Err(TaxonomyError::DuplicateCity(c.city_id));
            }
            city_map.insert(c.city_id.clone(), c);
        }
        if city_map.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut venue_index = HashMap::new();
        for c in city_map.values() {
            // First insert wins, so a name collision within a state resolves
            // to the lexicographically smallest city id.
            venue_index
                .entry((c.name.to_lowercase(), c.state_id.clone()))
                .or_insert_with(|| c.city_id.clone());
        }
        Ok(LocationTaxonomy {
            cities: city_map,
            states: state_map,
            venue_index,
        })
    }

    /// Loads a taxonomy from a tab-separated file. City rows look like
    /// `city <tab> id <tab> name <tab> state <tab> lat <tab> lon`; state rows
    /// look like `state <tab> id <tab> timezone <tab> census <tab> federal`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cities = Vec::new();
        let mut states = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| TaxonomyError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "city" => {
                    if fields.len() != 6 {
                        return Err(TaxonomyError::Parse {
                            line: line_no,
                            reason: format!("expected 6 city fields, got {}", fields.len()),
                        });
                    }
                    let lat = parse_coord(fields[4], line_no)?;
                    let lon = parse_coord(fields[5], line_no)?;
                    cities.push(CityEntry {
                        city_id: fields[1].to_string(),
                        name: fields[2].to_string(),
                        state_id: fields[3].to_string(),
                        lat,
                        lon,
                    });
                }
                "state" => {
                    if fields.len() != 5 {
                        return Err(TaxonomyError::Parse {
                            line: line_no,
                            reason: format!("expected 5 state fields, got {}", fields.len()),
                        });
                    }
                    states.push(StateEntry {
                        state_id: fields[1].to_string(),
                        timezone: fields[2].to_string(),
                        census_region: fields[3].to_string(),
                        federal_region: fields[4].to_string(),
                    });
                }
                other => {
                    return Err(TaxonomyError::Parse {
                        line: line_no,
                        reason: format!("unknown record type '{other}'"),
                    });
                }
            }
        }
        Self::from_entries(cities, states)
    }

    /// Writes the taxonomy in the format `load` reads, sorted by id.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.canonical_string().as_bytes())?;
        w.flush()
    }

    /// Deterministic textual form of the full taxonomy, used for hashing.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for c in self.cities.values() {
            out.push_str(&format!(
                "city\t{}\t{}\t{}\t{}\t{}\n",
                c.city_id, c.name, c.state_id, c.lat, c.lon
            ));
        }
        for s in self.states.values() {
            out.push_str(&format!(
                "state\t{}\t{}\t{}\t{}\n",
                s.state_id, s.timezone, s.census_region, s.federal_region
            ));
        }
        out
    }

    /// SHA-256 of the canonical form, hex-encoded. Trained model bundles
    /// embed this so they refuse to run against a different taxonomy.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    pub fn city(&self, city_id: &str) -> Option<&CityEntry> {
        self.cities.get(city_id)
    }

    pub fn state(&self, state_id: &str) -> Option<&StateEntry> {
        self.states.get(state_id)
    }

    pub fn cities(&self) -> impl Iterator<Item = &CityEntry> {
        self.cities.values()
    }

    pub fn states(&self) -> impl Iterator<Item = &StateEntry> {
        self.states.values()
    }

    pub fn city_count(&self) -> usize {
        self.cities.len()
    }

    /// Projects a city id to its label at the requested granularity.
    /// Returns `None` for unknown cities; never fails for known ones.
    pub fn project(&self, city_id: &str, granularity: Granularity) -> Option<String> {
        let city = self.cities.get(city_id)?;
        if granularity == Granularity::City {
            return Some(city.city_id.clone());
        }
        let state = &self.states[&city.state_id];
        Some(match granularity {
            Granularity::City => unreachable!(),
            Granularity::State => state.state_id.clone(),
            Granularity::TimeZone => state.timezone.clone(),
            Granularity::CensusRegion => state.census_region.clone(),
            Granularity::FederalRegion => state.federal_region.clone(),
        })
    }

    /// Distinct time zone labels reachable from any state.
    pub fn zone_labels(&self) -> BTreeSet<String> {
        self.states.values().map(|s| s.timezone.clone()).collect()
    }

    /// Distinct labels at a granularity over the whole taxonomy.
    pub fn labels_at(&self, granularity: Granularity) -> BTreeSet<String> {
        self.cities
            .keys()
            .map(|c| self.project(c, granularity).unwrap())
            .collect()
    }

    /// Resolves a venue (display city name, state id) to a city id.
    /// Name matching is case-insensitive; the state must match exactly.
    pub fn resolve_venue(&self, city_name: &str, state_id: &str) -> Option<&str> {
        self.venue_index
            .get(&(city_name.to_lowercase(), state_id.to_string()))
            .map(String::as_str)
    }
}

fn parse_coord(s: &str, line: usize) -> Result<f64, TaxonomyError> {
    s.parse::<f64>().map_err(|_| TaxonomyError::Parse {
        line,
        reason: format!("bad coordinate '{s}'"),
    })
}

// ---------------------------------------------------------------------------
// Gazetteer
// ---------------------------------------------------------------------------

/// A gazetteer target: either a city or a state from the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlaceRef {
    City(String),
    State(String),
}

impl PlaceRef {
    pub fn id(&self) -> &str {
        match self {
            PlaceRef::City(id) | PlaceRef::State(id) => id,
        }
    }
}

/// Surface forms (1 to 3 tokens, case-folded) mapped to the places they can
/// name. Ambiguous forms keep every candidate target.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, BTreeSet<PlaceRef>>,
    longest: usize,
}

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("failed to read gazetteer {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gazetteer line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("surface form '{0}' does not normalize to 1-3 tokens")]
    SurfaceLength(String),
    #[error("surface form '{surface}' targets unknown {kind} '{id}'")]
    UnknownTarget {
        surface: String,
        kind: &'static str,
        id: String,
    },
}

impl Gazetteer {
    pub fn from_entries(
        entries: Vec<(String, PlaceRef)>,
        taxonomy: &LocationTaxonomy,
    ) -> Result<Self, GazetteerError> {
        let mut map: HashMap<String, BTreeSet<PlaceRef>> = HashMap::new();
        let mut longest = 0;
        for (surface, target) in entries {
            let tokens = tokenize(&surface);
            let n = tokens.tokens.len();
            if n == 0 || n > 3 {
                return Err(GazetteerError::SurfaceLength(surface));
            }
            match &target {
                PlaceRef::City(id) => {
                    if taxonomy.city(id).is_none() {
                        return Err(GazetteerError::UnknownTarget {
                            surface,
                            kind: "city",
                            id: id.clone(),
                        });
                    }
                }
                PlaceRef::State(id) => {
                    if taxonomy.state(id).is_none() {
                        return Err(GazetteerError::UnknownTarget {
                            surface,
                            kind: "state",
                            id: id.clone(),
                        });
                    }
                }
            }
            let key = tokens.join(" ");
            longest = longest.max(n);
            map.entry(key).or_default().insert(target);
        }
        Ok(Gazetteer {
            entries: map,
            longest,
        })
    }

    /// Loads `surface <tab> city|state <tab> target_id` lines.
    pub fn load(
        path: impl AsRef<Path>,
        taxonomy: &LocationTaxonomy,
    ) -> Result<Self, GazetteerError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| GazetteerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| GazetteerError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(GazetteerError::Parse {
                    line: line_no,
                    reason: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let target = match fields[1] {
                "city" => PlaceRef::City(fields[2].to_string()),
                "state" => PlaceRef::State(fields[2].to_string()),
                other => {
                    return Err(GazetteerError::Parse {
                        line: line_no,
                        reason: format!("unknown place kind '{other}'"),
                    });
                }
            };
            entries.push((fields[0].to_string(), target));
        }
        Self::from_entries(entries, taxonomy)
    }

    /// Writes the gazetteer in the format `load` reads, sorted.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut rows: Vec<String> = Vec::new();
        for (surface, targets) in &self.entries {
            for t in targets {
                let kind = match t {
                    PlaceRef::City(_) => "city",
                    PlaceRef::State(_) => "state",
                };
                rows.push(format!("{surface}\t{kind}\t{}", t.id()));
            }
        }
        rows.sort();
        let mut w = BufWriter::new(File::create(path)?);
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()
    }

    /// Looks up a normalized (case-folded, space-joined) surface form.
    pub fn lookup(&self, surface: &str) -> Option<&BTreeSet<PlaceRef>> {
        self.entries.get(surface)
    }

    /// Longest surface form in tokens; n-gram scans never need to go past it.
    pub fn longest_surface(&self) -> usize {
        self.longest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Corpus I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawMessage {
    text: String,
    created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    venue_city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    venue_state: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    home_label: Option<String>,
    messages: Vec<RawMessage>,
}

/// Why a record was rejected during ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordFault {
    Malformed(String),
    EmptyUserId,
    DuplicateUser(String),
    UnknownLabel(String),
    NoMessages,
    BadTimestamp(String),
    BadGeotag(String),
    BadVenue(String),
}

impl fmt::Display for RecordFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordFault::Malformed(e) => write!(f, "malformed record: {e}"),
            RecordFault::EmptyUserId => write!(f, "empty user id"),
            RecordFault::DuplicateUser(id) => write!(f, "duplicate user id '{id}'"),
            RecordFault::UnknownLabel(l) => write!(f, "home label '{l}' is not in the taxonomy"),
            RecordFault::NoMessages => write!(f, "user has no messages"),
            RecordFault::BadTimestamp(t) => write!(f, "unparseable timestamp '{t}'"),
            RecordFault::BadGeotag(r) => write!(f, "bad geotag: {r}"),
            RecordFault::BadVenue(r) => write!(f, "bad venue: {r}"),
        }
    }
}

/// A rejected input line: 1-based line number plus the fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub fault: RecordFault,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.fault)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus {0}")]
    Record(RecordError),
}

/// Accepted users plus the per-line report of rejected records.
#[derive(Debug)]
pub struct CorpusLoad {
    pub users: Vec<UserRecord>,
    pub rejected: Vec<RecordError>,
}

/// Loads a line-delimited corpus. In strict mode the first bad record aborts
/// the load; otherwise bad records are skipped and reported. Messages are
/// normalized to descending creation time.
pub fn load_corpus(
    path: impl AsRef<Path>,
    taxonomy: &LocationTaxonomy,
    strict: bool,
) -> Result<CorpusLoad, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut users: Vec<UserRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut rejected = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, taxonomy, &seen) {
            Ok(user) => {
                seen.insert(user.user_id.clone());
                users.push(user);
            }
            Err(fault) => {
                let err = RecordError {
                    line: line_no,
                    fault,
                };
                if strict {
                    return Err(CorpusError::Record(err));
                }
                rejected.push(err);
            }
        }
    }
    Ok(CorpusLoad { users, rejected })
}

fn parse_record(
    line: &str,
    taxonomy: &LocationTaxonomy,
    seen: &std::collections::HashSet<String>,
) -> Result<UserRecord, RecordFault> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| RecordFault::Malformed(e.to_string()))?;
    if raw.user_id.is_empty() {
        return Err(RecordFault::EmptyUserId);
    }
    if seen.contains(&raw.user_id) {
        return Err(RecordFault::DuplicateUser(raw.user_id));
    }
    if let Some(label) = &raw.home_label {
        if taxonomy.city(label).is_none() {
            return Err(RecordFault::UnknownLabel(label.clone()));
        }
    }
    if raw.messages.is_empty() {
        return Err(RecordFault::NoMessages);
    }
    let mut messages = Vec::with_capacity(raw.messages.len());
    for m in raw.messages {
        let created_at = DateTime::parse_from_rfc3339(&m.created_at)
            .map_err(|_| RecordFault::BadTimestamp(m.created_at.clone()))?
            .with_timezone(&Utc);
        let geotag = match (m.lat, m.lon) {
            (None, None) => None,
            (Some(lat), Some(lon)) => Some(
                GeoPoint::checked(lat, lon)
                    .ok_or_else(|| RecordFault::BadGeotag(format!("({lat}, {lon})")))?,
            ),
            _ => {
                return Err(RecordFault::BadGeotag(
                    "latitude and longitude must appear together".into(),
                ));
            }
        };
        let venue = match (m.venue_city, m.venue_state) {
            (None, None) => None,
            (Some(city), Some(state)) => {
                if city.is_empty() || state.is_empty() {
                    return Err(RecordFault::BadVenue(
                        "venue city and state must be non-empty".into(),
                    ));
                }
                Some(Venue { city, state })
            }
            _ => {
                return Err(RecordFault::BadVenue(
                    "venue city and state must appear together".into(),
                ));
            }
        };
        messages.push(Message {
            text: m.text,
            created_at,
            geotag,
            venue,
        });
    }
    messages.sort_by(|a, b| b.created_at.cmp(&a.created_at));
    Ok(UserRecord {
        user_id: raw.user_id,
        home_label: raw.home_label,
        messages,
    })
}

/// Writes users in the format `load_corpus` reads, one JSON record per line.
pub fn save_corpus(path: impl AsRef<Path>, users: &[UserRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for u in users {
        let raw = RawRecord {
            user_id: u.user_id.clone(),
            home_label: u.home_label.clone(),
            messages: u
                .messages
                .iter()
                .map(|m| RawMessage {
                    text: m.text.clone(),
                    created_at: m.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
                    lat: m.geotag.map(|g| g.lat),
                    lon: m.geotag.map(|g| g.lon),
                    venue_city: m.venue.as_ref().map(|v| v.city.clone()),
                    venue_state: m.venue.as_ref().map(|v| v.state.clone()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &raw)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Truncates every user to their `cap` most recent messages.
pub fn apply_message_cap(users: &mut [UserRecord], cap: usize) {
    for u in users {
        u.messages.truncate(cap);
    }
}

// ---------------------------------------------------------------------------
// Fold splitting
// ---------------------------------------------------------------------------

/// One cross-validation fold, as indices into the input user slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FoldError {
    #[error("fold count must be at least 2 (got {0})")]
    TooFew(usize),
    #[error("fold count {k} exceeds user count {n}")]
    TooMany { k: usize, n: usize },
}

/// Splits users into `k` disjoint test folds with a seeded shuffle.
/// Fold sizes differ by at most one; the same seed reproduces the split.
pub fn split_folds(users: &[UserRecord], k: usize, seed: u64) -> Result<Vec<Fold>, FoldError> {
    if k < 2 {
        return Err(FoldError::TooFew(k));
    }
    if k > users.len() {
        return Err(FoldError::TooMany { k, n: users.len() });
    }
    let mut order: Vec<usize> = (0..users.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = Vec::with_capacity(k);
    for fold_idx in 0..k {
        let mut test: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % k == fold_idx)
            .map(|(_, &u)| u)
            .collect();
        let mut train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % k != fold_idx)
            .map(|(_, &u)| u)
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
    }
    Ok(folds)
}
