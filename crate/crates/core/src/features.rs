//! Tokenization, term-family extraction, and local-term selection.
//!
//! Message text flows through three stages:
//! 1. `tokenize` splits on whitespace, strips edge punctuation, drops URLs
//!    and special-character tokens (hashtags are exempt), and case-folds.
//! 2. `extract_terms` projects a token stream onto one of the three term
//!    families: plain words (stop-filtered), hashtags, or gazetteer place
//!    names matched as uni/bi/tri-grams.
//! 3. `compute_term_stats` / `select_local_terms` keep only terms whose
//!    usage concentrates in a small set of locations. Selection applies
//!    three clauses in order: a per-location support floor, a minimum gap
//!    between the peak and mean conditional probability, and a minimum peak.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Gazetteer, Granularity, LocationTaxonomy, UserRecord};

/// One token: case-folded surface plus whether it is a hashtag.
/// Hashtag surfaces keep their leading `#`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub hashtag: bool,
}

/// Ordered tokens from one piece of text. No token contains whitespace and
/// URLs never appear.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Space-joins the surfaces. Tokenizing the result reproduces the stream.
    pub fn join(&self, sep: &str) -> String {
        self.texts().collect::<Vec<_>>().join(sep)
    }
}

/// Whether the token keeps only ordinary word characters. Interior
/// apostrophes are retained; anything else counts as a special character.
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Splits text into tokens: Unicode whitespace split, URL removal, edge
/// punctuation stripping, special-character filtering (hashtags exempt),
/// case-folded output.
pub fn tokenize(text: &str) -> TokenStream {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let folded = raw.to_lowercase();
        if folded.starts_with("http://") || folded.starts_with("https://") {
            continue;
        }
        let mut chars: Vec<char> = folded.chars().collect();
        while let Some(&last) = chars.last() {
            if last.is_alphanumeric() {
                break;
            }
            chars.pop();
        }
        let mut start = 0;
        while start < chars.len() {
            let c = chars[start];
            if c.is_alphanumeric() || c == '#' {
                break;
            }
            start += 1;
        }
        let stripped: String = chars[start..].iter().collect();
        if stripped.is_empty() {
            continue;
        }
        if let Some(rest) = stripped.strip_prefix('#') {
            if !rest.is_empty() {
                tokens.push(Token {
                    text: stripped,
                    hashtag: true,
                });
            }
            continue;
        }
        if stripped.chars().all(is_word_char) {
            tokens.push(Token {
                text: stripped,
                hashtag: false,
            });
        }
    }
    TokenStream { tokens }
}

// ---------------------------------------------------------------------------
// Stop words
// ---------------------------------------------------------------------------

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// A set of tokens excluded from the word term family.
#[derive(Debug, Clone, Default)]
pub struct StopwordList {
    set: HashSet<String>,
}

impl StopwordList {
    /// The bundled English list (174 entries, one lowercased token per line).
    pub fn default_english() -> Self {
        Self::from_lines(DEFAULT_STOPWORDS)
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::from_lines(&std::fs::read_to_string(path)?))
    }

    fn from_lines(content: &str) -> Self {
        let set = content
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        StopwordList { set }
    }

    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        StopwordList {
            set: tokens.into_iter().map(|t| t.into().to_lowercase()).collect(),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.set.contains(token)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Decides which word tokens survive extraction. The default filter drops
/// stop words; alternative filters (e.g. a part-of-speech gate) can slot in
/// without touching the extraction pipeline.
pub trait TokenFilter {
    fn keep(&self, token: &Token) -> bool;
}

impl TokenFilter for StopwordList {
    fn keep(&self, token: &Token) -> bool {
        !self.contains(&token.text)
    }
}

// ---------------------------------------------------------------------------
// Term families
// ---------------------------------------------------------------------------

/// The three content term families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TermFamily {
    #[serde(rename = "words")]
    Words,
    #[serde(rename = "hashtags")]
    Hashtags,
    #[serde(rename = "placenames")]
    PlaceNames,
}

impl TermFamily {
    pub const ALL: [TermFamily; 3] = [TermFamily::Words, TermFamily::Hashtags, TermFamily::PlaceNames];

    pub fn key(self) -> &'static str {
        match self {
            TermFamily::Words => "words",
            TermFamily::Hashtags => "hashtags",
            TermFamily::PlaceNames => "placenames",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "words" => Some(TermFamily::Words),
            "hashtags" => Some(TermFamily::Hashtags),
            "placenames" => Some(TermFamily::PlaceNames),
            _ => None,
        }
    }
}

/// Prefixes a term with its family key so vocabularies can be pooled
/// without collisions.
pub fn namespaced(family: TermFamily, term: &str) -> String {
    format!("{}:{}", family.key(), term)
}

/// All gazetteer surface forms found as uni/bi/tri-grams of the stream, in
/// scan order. Overlapping matches are all emitted.
pub fn place_name_matches(stream: &TokenStream, gazetteer: &Gazetteer) -> Vec<String> {
    let texts: Vec<&str> = stream.texts().collect();
    let max_n = gazetteer.longest_surface().min(3);
    let mut matches = Vec::new();
    for i in 0..texts.len() {
        for n in 1..=max_n.min(texts.len() - i) {
            let candidate = texts[i..i + n].join(" ");
            if gazetteer.lookup(&candidate).is_some() {
                matches.push(candidate);
            }
        }
    }
    matches
}

/// Projects a token stream onto one term family. The result is a multiset:
/// repeated occurrences stay repeated.
pub fn extract_terms(
    stream: &TokenStream,
    family: TermFamily,
    stopwords: &StopwordList,
    gazetteer: &Gazetteer,
) -> Vec<String> {
    match family {
        TermFamily::Words => stream
            .tokens
            .iter()
            .filter(|t| !t.hashtag && stopwords.keep(t))
            .map(|t| t.text.clone())
            .collect(),
        TermFamily::Hashtags => stream
            .tokens
            .iter()
            .filter(|t| t.hashtag)
            .map(|t| t.text.clone())
            .collect(),
        TermFamily::PlaceNames => place_name_matches(stream, gazetteer),
    }
}

/// Extracts one family's terms across every message of a user.
pub fn user_terms(
    user: &UserRecord,
    family: TermFamily,
    stopwords: &StopwordList,
    gazetteer: &Gazetteer,
) -> Vec<String> {
    let mut terms = Vec::new();
    for m in &user.messages {
        terms.extend(extract_terms(&tokenize(&m.text), family, stopwords, gazetteer));
    }
    terms
}

// ---------------------------------------------------------------------------
// Term/location statistics and local-term selection
// ---------------------------------------------------------------------------

/// Per-term usage: distinct-user counts per location and the conditional
/// location distribution. The distribution covers every model location
/// (zero entries included) and sums to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct TermLocationStats {
    pub term: String,
    pub family: TermFamily,
    pub user_counts: BTreeMap<String, u32>,
    pub distribution: BTreeMap<String, f64>,
}

impl TermLocationStats {
    pub fn max_prob(&self) -> f64 {
        self.distribution.values().copied().fold(0.0, f64::max)
    }

    pub fn mean_prob(&self) -> f64 {
        if self.distribution.is_empty() {
            return 0.0;
        }
        self.distribution.values().sum::<f64>() / self.distribution.len() as f64
    }

    /// Location with the highest conditional probability; ties resolve to
    /// the lexicographically smallest label.
    pub fn top_location(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (loc, &p) in &self.distribution {
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((loc, p)),
            }
        }
        best.map(|(loc, _)| loc)
    }
}

/// Term statistics for one (family, granularity) over a training set.
#[derive(Debug, Clone)]
pub struct TermStatsTable {
    pub family: TermFamily,
    pub granularity: Granularity,
    pub locations: BTreeSet<String>,
    pub users_per_location: BTreeMap<String, u32>,
    pub stats: Vec<TermLocationStats>,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no labeled users to compute term statistics from")]
    EmptyTrainingSet,
    #[error("user '{0}' has no home label")]
    UnlabeledUser(String),
}

/// Counts, per term, how many distinct users of each location used it, and
/// derives the conditional location distribution.
pub fn compute_term_stats(
    users: &[UserRecord],
    family: TermFamily,
    granularity: Granularity,
    taxonomy: &LocationTaxonomy,
    gazetteer: &Gazetteer,
    stopwords: &StopwordList,
) -> Result<TermStatsTable, FeatureError> {
    if users.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut users_per_location: BTreeMap<String, u32> = BTreeMap::new();
    let mut counts: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for user in users {
        let home = user
            .home_label
            .as_deref()
            .ok_or_else(|| FeatureError::UnlabeledUser(user.user_id.clone()))?;
        let label = taxonomy
            .project(home, granularity)
            .ok_or_else(|| FeatureError::UnlabeledUser(user.user_id.clone()))?;
        *users_per_location.entry(label.clone()).or_default() += 1;
        let distinct: BTreeSet<String> = user_terms(user, family, stopwords, gazetteer)
            .into_iter()
            .collect();
        for term in distinct {
            *counts.entry(term).or_default().entry(label.clone()).or_default() += 1;
        }
    }
    let locations: BTreeSet<String> = users_per_location.keys().cloned().collect();
    let stats = counts
        .into_iter()
        .map(|(term, user_counts)| {
            let total: u32 = user_counts.values().sum();
            let distribution: BTreeMap<String, f64> = locations
                .iter()
                .map(|loc| {
                    let c = user_counts.get(loc).copied().unwrap_or(0);
                    (loc.clone(), f64::from(c) / f64::from(total))
                })
                .collect();
            TermLocationStats {
                term,
                family,
                user_counts,
                distribution,
            }
        })
        .collect();
    Ok(TermStatsTable {
        family,
        granularity,
        locations,
        users_per_location,
        stats,
    })
}

/// Thresholds for local-term selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTermConfig {
    /// Support floor: the term must be used by at least this fraction of the
    /// users of at least one location.
    pub k_percent: f64,
    /// Minimum gap between the peak conditional probability and the mean
    /// over all model locations (zeros included).
    pub t_diff: f64,
    /// Minimum peak conditional probability.
    pub t_max: f64,
}

impl Default for LocalTermConfig {
    fn default() -> Self {
        LocalTermConfig {
            k_percent: 0.05,
            t_diff: 0.1,
            t_max: 0.5,
        }
    }
}

impl LocalTermConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("k_percent", self.k_percent),
            ("t_diff", self.t_diff),
            ("t_max", self.t_max),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Keeps terms passing all three selection clauses, applied in order:
/// (a) support floor in at least one location, (b) max - mean >= t_diff,
/// (c) max >= t_max. All comparisons are >= with no epsilon.
pub fn select_local_terms(
    stats: &[TermLocationStats],
    users_per_location: &BTreeMap<String, u32>,
    config: &LocalTermConfig,
) -> BTreeSet<String> {
    let mut selected = BTreeSet::new();
    for s in stats {
        let supported = s.user_counts.iter().any(|(loc, &c)| {
            let total = users_per_location.get(loc).copied().unwrap_or(0);
            total > 0 && f64::from(c) >= config.k_percent * f64::from(total)
        });
        if !supported {
            continue;
        }
        let max = s.max_prob();
        if max - s.mean_prob() < config.t_diff {
            continue;
        }
        if max < config.t_max {
            continue;
        }
        selected.insert(s.term.clone());
    }
    selected
}

/// Writes selected terms with their stats, one row per term:
/// `term <tab> family <tab> max_prob <tab> mean_prob <tab> chosen_location`.
pub fn write_local_term_dump<W: Write>(
    mut w: W,
    table: &TermStatsTable,
    selected: &BTreeSet<String>,
) -> std::io::Result<()> {
    writeln!(w, "term\tfamily\tmax_prob\tmean_prob\tchosen_location")?;
    for s in &table.stats {
        if !selected.contains(&s.term) {
            continue;
        }
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{}",
            s.term,
            s.family.key(),
            s.max_prob(),
            s.mean_prob(),
            s.top_location().unwrap_or("-")
        )?;
    }
    Ok(())
}
