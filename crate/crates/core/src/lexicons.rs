//! Closed-vocabulary scoring with category and emotion lexicons.
//!
//! Category lexicons load from a LIWC-style `.dic` file or a plain
//! `category<TAB>word` listing. Entries are literal words or `stem*`
//! prefixes. Emotion lexicons use the three-column `word<TAB>label<TAB>0|1`
//! layout.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, UserProfile};
use crate::textscan::{normalize_word, Scanner};

pub const EMOTION_COUNT: usize = 10;

/// Prefix used in lexicon paths to select a bundled lexicon.
pub const BUILTIN_PREFIX: &str = "builtin:";

const DEMO_LIWC: &str = include_str!("../data/demo_liwc.tsv");
const DEPRESSION_SEED: &str = include_str!("../data/depression_lexicon.tsv");
const ABSOLUTIST_SEED: &str = include_str!("../data/absolutist.tsv");
const DEMO_EMOTIONS: &str = include_str!("../data/demo_emotions.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown bundled lexicon {0:?}")]
    UnknownBuiltin(String),
    #[error("{name}: unrecognized lexicon format at line {line}")]
    UnknownFormat { name: String, line: usize },
    #[error("{name}: category {category:?} has no entries")]
    EmptyCategory { name: String, category: String },
    #[error("{name}: line {line}: {reason}")]
    InvalidEntry {
        name: String,
        line: usize,
        reason: String,
    },
    #[error("{name}: unknown category {category:?}")]
    UnknownCategory { name: String, category: String },
    #[error("{name}: lexicon has no categories")]
    NoCategories { name: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Entry {
    Literal(String),
    /// Matches any token starting with the stem.
    Prefix(String),
}

impl Entry {
    fn parse(raw: &str) -> Result<Self, String> {
        let word = normalize_word(raw.trim());
        if word.is_empty() {
            return Err("empty entry".into());
        }
        match word.strip_suffix('*') {
            Some(stem) if stem.contains('*') => Err(format!("malformed pattern {raw:?}")),
            Some(stem) if stem.chars().count() < 2 => Err(format!(
                "prefix stem {raw:?} is shorter than two characters"
            )),
            Some(stem) => Ok(Entry::Prefix(stem.to_string())),
            None => Ok(Entry::Literal(word)),
        }
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Entry::Literal(w) => token == w,
            Entry::Prefix(stem) => token.starts_with(stem.as_str()),
        }
    }
}

impl std::fmt::Display for Entry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entry::Literal(w) => f.write_str(w),
            Entry::Prefix(s) => write!(f, "{s}*"),
        }
    }
}

/// True iff any token equals a literal entry or starts with a prefix stem.
pub fn match_category<S: AsRef<str>>(tokens: &[S], entries: &[Entry]) -> bool {
    tokens
        .iter()
        .any(|t| entries.iter().any(|e| e.matches(t.as_ref())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
pub struct CategoryLexicon {
    pub name: String,
    categories: Vec<Category>,
    digest: String,
    warnings: Vec<String>,
    literals: HashMap<String, Vec<usize>>,
    prefixes: HashMap<String, Vec<usize>>,
    longest_stem: usize,
}

impl PartialEq for CategoryLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.categories == other.categories
    }
}

impl CategoryLexicon {
    pub fn new(name: impl Into<String>, categories: Vec<Category>) -> Result<Self, LexiconError> {
        Self::assemble(name.into(), categories, String::new(), Vec::new())
    }

    fn assemble(
        name: String,
        categories: Vec<Category>,
        digest: String,
        mut warnings: Vec<String>,
    ) -> Result<Self, LexiconError> {
        if categories.is_empty() {
            return Err(LexiconError::NoCategories { name });
        }
        let mut seen = HashSet::new();
        let mut cleaned = Vec::with_capacity(categories.len());
        for mut cat in categories {
            if !seen.insert(cat.name.clone()) {
                return Err(LexiconError::InvalidEntry {
                    name,
                    line: 0,
                    reason: format!("duplicate category {:?}", cat.name),
                });
            }
            let mut unique = HashSet::new();
            let before = cat.entries.len();
            cat.entries.retain(|e| unique.insert(e.clone()));
            if cat.entries.len() < before {
                let msg = format!(
                    "{name}: removed {} duplicate entries from category {:?}",
                    before - cat.entries.len(),
                    cat.name
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            if cat.entries.is_empty() {
                return Err(LexiconError::EmptyCategory {
                    name,
                    category: cat.name,
                });
            }
            cleaned.push(cat);
        }
        let mut literals: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefixes: HashMap<String, Vec<usize>> = HashMap::new();
        let mut longest_stem = 0;
        for (idx, cat) in cleaned.iter().enumerate() {
            for entry in &cat.entries {
                match entry {
                    Entry::Literal(w) => literals.entry(w.clone()).or_default().push(idx),
                    Entry::Prefix(s) => {
                        longest_stem = longest_stem.max(s.len());
                        prefixes.entry(s.clone()).or_default().push(idx);
                    }
                }
            }
        }
        Ok(Self {
            name,
            categories: cleaned,
            digest,
            warnings,
            literals,
            prefixes,
            longest_stem,
        })
    }

    /// Loads a lexicon from disk, or a bundled one via `builtin:<name>`.
    pub fn load(path: &str) -> Result<Self, LexiconError> {
        if let Some(name) = path.strip_prefix(BUILTIN_PREFIX) {
            let text = match name {
                "demo-liwc" => DEMO_LIWC,
                "depression" => DEPRESSION_SEED,
                "absolutist" => ABSOLUTIST_SEED,
                other => return Err(LexiconError::UnknownBuiltin(other.to_string())),
            };
            return Self::parse(name, text);
        }
        let p = Path::new(path);
        let text = fs::read_to_string(p).map_err(|source| LexiconError::Io {
            path: path.to_string(),
            source,
        })?;
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string());
        Self::parse(&name, &text)
    }

    /// Detects the format: `.dic` when the first significant line is `%`,
    /// otherwise `category<TAB>word`.
    pub fn parse(name: &str, text: &str) -> Result<Self, LexiconError> {
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        let first = text.lines().map(str::trim).find(|l| !l.is_empty());
        if first == Some("%") {
            parse_dic(name, text, digest)
        } else {
            parse_tsv(name, text, digest)
        }
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn category_names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Restricts the lexicon to the named categories, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self, LexiconError> {
        let picked = names
            .iter()
            .map(|n| {
                self.category(n)
                    .cloned()
                    .ok_or_else(|| LexiconError::UnknownCategory {
                        name: self.name.clone(),
                        category: n.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(
            self.name.clone(),
            picked,
            self.digest.clone(),
            self.warnings.clone(),
        )
    }

    /// One flag per category: does any token match it?
    pub fn document_hits<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<bool> {
        let mut hits = vec![false; self.categories.len()];
        for tok in tokens {
            let tok = tok.as_ref();
            if let Some(cats) = self.literals.get(tok) {
                for &c in cats {
                    hits[c] = true;
                }
            }
            if self.prefixes.is_empty() {
                continue;
            }
            for (end, _) in tok
                .char_indices()
                .skip(1)
                .chain(std::iter::once((tok.len(), ' ')))
            {
                if end > self.longest_stem {
                    break;
                }
                if let Some(cats) = self.prefixes.get(&tok[..end]) {
                    for &c in cats {
                        hits[c] = true;
                    }
                }
            }
        }
        hits
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn parse_dic(name: &str, text: &str, digest: String) -> Result<CategoryLexicon, LexiconError> {
    let mut ids: Vec<(String, String)> = Vec::new();
    let mut entries: HashMap<String, Vec<Entry>> = HashMap::new();
    let mut warnings = Vec::new();
    let mut section = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "%" {
            section += 1;
            continue;
        }
        let invalid = |reason: String| LexiconError::InvalidEntry {
            name: name.to_string(),
            line: line_no,
            reason,
        };
        match section {
            1 => {
                let fields = split_fields(line);
                if fields.len() < 2 {
                    return Err(invalid(format!("malformed category header {line:?}")));
                }
                ids.push((fields[0].to_string(), fields[1..].join(" ")));
            }
            2 => {
                let (word, rest) = match line.split_once('\t') {
                    Some((w, rest)) => (w.trim(), rest),
                    None => line
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| invalid(format!("entry {line:?} has no category ids")))?,
                };
                if word.contains(char::is_whitespace) {
                    let msg = format!("{name}: line {line_no}: multi-word entry {word:?} skipped");
                    log::warn!("{msg}");
                    warnings.push(msg);
                    continue;
                }
                let entry = Entry::parse(word).map_err(invalid)?;
                for id in rest.split_whitespace() {
                    if !ids.iter().any(|(k, _)| k == id) {
                        return Err(invalid(format!("unknown category id {id:?}")));
                    }
                    entries
                        .entry(id.to_string())
                        .or_default()
                        .push(entry.clone());
                }
            }
            _ => {
                return Err(LexiconError::UnknownFormat {
                    name: name.to_string(),
                    line: line_no,
                })
            }
        }
    }
    let categories = ids
        .into_iter()
        .map(|(id, cat_name)| Category {
            name: cat_name,
            entries: entries.remove(&id).unwrap_or_default(),
        })
        .collect();
    CategoryLexicon::assemble(name.to_string(), categories, digest, warnings)
}

fn parse_tsv(name: &str, text: &str, digest: String) -> Result<CategoryLexicon, LexiconError> {
    let mut order: Vec<String> = Vec::new();
    let mut entries: HashMap<String, Vec<Entry>> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((cat, word)) = line.split_once('\t') else {
            return Err(LexiconError::UnknownFormat {
                name: name.to_string(),
                line: line_no,
            });
        };
        let cat = cat.trim();
        if cat.is_empty() {
            return Err(LexiconError::InvalidEntry {
                name: name.to_string(),
                line: line_no,
                reason: "missing category name".into(),
            });
        }
        if !entries.contains_key(cat) {
            order.push(cat.to_string());
        }
        let bucket = entries.entry(cat.to_string()).or_default();
        if word.trim().is_empty() {
            // a bare category declaration
            continue;
        }
        let entry = Entry::parse(word).map_err(|reason| LexiconError::InvalidEntry {
            name: name.to_string(),
            line: line_no,
            reason,
        })?;
        bucket.push(entry);
    }
    let categories = order
        .into_iter()
        .map(|cat| Category {
            entries: entries.remove(&cat).unwrap_or_default(),
            name: cat,
        })
        .collect();
    CategoryLexicon::assemble(name.to_string(), categories, digest, Vec::new())
}

/// Plutchik's eight emotions plus polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Joy,
    Sadness,
    Anger,
    Fear,
    Disgust,
    Surprise,
    Trust,
    Anticipation,
    Positive,
    Negative,
}

impl Emotion {
    pub const ALL: [Emotion; EMOTION_COUNT] = [
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Surprise,
        Emotion::Trust,
        Emotion::Anticipation,
        Emotion::Positive,
        Emotion::Negative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Surprise => "surprise",
            Emotion::Trust => "trust",
            Emotion::Anticipation => "anticipation",
            Emotion::Positive => "positive",
            Emotion::Negative => "negative",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    fn bit(self) -> u16 {
        1 << self.index()
    }
}

/// Word → set of associated emotions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionLexicon {
    pub name: String,
    words: HashMap<String, u16>,
    digest: String,
}

impl EmotionLexicon {
    pub fn load(path: &str) -> Result<Self, LexiconError> {
        if let Some(name) = path.strip_prefix(BUILTIN_PREFIX) {
            return match name {
                "demo-emotions" => Self::parse(name, DEMO_EMOTIONS),
                other => Err(LexiconError::UnknownBuiltin(other.to_string())),
            };
        }
        let p = Path::new(path);
        let text = fs::read_to_string(p).map_err(|source| LexiconError::Io {
            path: path.to_string(),
            source,
        })?;
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string());
        Self::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, LexiconError> {
        let mut words: HashMap<String, u16> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |reason: String| LexiconError::InvalidEntry {
                name: name.to_string(),
                line: idx + 1,
                reason,
            };
            let fields = split_fields(line);
            if fields.len() != 3 {
                return Err(LexiconError::UnknownFormat {
                    name: name.to_string(),
                    line: idx + 1,
                });
            }
            let word = normalize_word(fields[0]);
            if word.is_empty() {
                return Err(invalid("empty word".into()));
            }
            let emotion = Emotion::from_name(&fields[1].to_lowercase())
                .ok_or_else(|| invalid(format!("unknown emotion label {:?}", fields[1])))?;
            let mask = words.entry(word).or_insert(0);
            match fields[2] {
                "1" => *mask |= emotion.bit(),
                "0" => {}
                other => {
                    return Err(invalid(format!(
                        "association flag must be 0 or 1, got {other:?}"
                    )))
                }
            }
        }
        Ok(Self {
            name: name.to_string(),
            words,
            digest: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn from_associations<'a>(
        name: &str,
        pairs: impl IntoIterator<Item = (&'a str, &'a [Emotion])>,
    ) -> Self {
        let words = pairs
            .into_iter()
            .map(|(w, es)| (normalize_word(w), es.iter().fold(0, |m, e| m | e.bit())))
            .collect();
        Self {
            name: name.to_string(),
            words,
            digest: String::new(),
        }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn emotions_of(&self, word: &str) -> Vec<Emotion> {
        let mask = self.words.get(word).copied().unwrap_or(0);
        Emotion::ALL
            .into_iter()
            .filter(|e| mask & e.bit() != 0)
            .collect()
    }

    fn document_mask<S: AsRef<str>>(&self, tokens: &[S]) -> u16 {
        tokens
            .iter()
            .filter_map(|t| self.words.get(t.as_ref()))
            .fold(0, |m, w| m | w)
    }
}

/// Share of a user's documents matching each category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCategoryProfile {
    pub user_id: String,
    pub class_label: String,
    pub documents: usize,
    pub proportions: BTreeMap<String, f64>,
}

pub(crate) fn nonempty_users<'a>(users: &'a [UserProfile], what: &str) -> Vec<&'a UserProfile> {
    users
        .iter()
        .filter(|u| {
            let keep = !u.documents().is_empty();
            if !keep {
                log::warn!(
                    "{what}: user {} has no documents and is excluded",
                    u.user_id()
                );
            }
            keep
        })
        .collect()
}

/// Accumulates per-document category hits for one user.
#[derive(Debug, Clone)]
pub struct CategoryTally {
    matched: Vec<usize>,
    documents: usize,
}

impl CategoryTally {
    pub fn new(lexicon: &CategoryLexicon) -> Self {
        Self {
            matched: vec![0; lexicon.categories().len()],
            documents: 0,
        }
    }

    pub fn add<S: AsRef<str>>(&mut self, lexicon: &CategoryLexicon, words: &[S]) {
        for (slot, hit) in self.matched.iter_mut().zip(lexicon.document_hits(words)) {
            *slot += usize::from(hit);
        }
        self.documents += 1;
    }

    pub fn finish(self, user: &UserProfile, lexicon: &CategoryLexicon) -> UserCategoryProfile {
        let n = self.documents.max(1) as f64;
        UserCategoryProfile {
            user_id: user.user_id().to_string(),
            class_label: user.class_label().to_string(),
            documents: self.documents,
            proportions: lexicon
                .category_names()
                .iter()
                .zip(&self.matched)
                .map(|(name, m)| (name.to_string(), *m as f64 / n))
                .collect(),
        }
    }
}

pub fn category_profiles_for(
    users: &[UserProfile],
    lexicon: &CategoryLexicon,
    scanner: &Scanner,
) -> Vec<UserCategoryProfile> {
    nonempty_users(users, "category profiles")
        .par_iter()
        .map(|user| {
            let mut tally = CategoryTally::new(lexicon);
            for doc in user.documents() {
                tally.add(lexicon, &scanner.tokenize(&doc.text).normalized_words());
            }
            tally.finish(user, lexicon)
        })
        .collect()
}

pub fn category_profiles(
    corpus: &Corpus,
    class_label: &str,
    lexicon: &CategoryLexicon,
    scanner: &Scanner,
) -> Result<Vec<UserCategoryProfile>, LexiconError> {
    Ok(category_profiles_for(
        corpus.cohort(class_label)?,
        lexicon,
        scanner,
    ))
}

/// Per-user document counts and fractions for each emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEmotionStats {
    pub user_id: String,
    pub class_label: String,
    pub documents: usize,
    pub counts: [u32; EMOTION_COUNT],
    pub fractions: [f64; EMOTION_COUNT],
}

impl UserEmotionStats {
    pub fn count(&self, e: Emotion) -> u32 {
        self.counts[e.index()]
    }

    pub fn fraction(&self, e: Emotion) -> f64 {
        self.fractions[e.index()]
    }

    /// Counts as floats, for correlation input.
    pub fn counts_f64(&self) -> [f64; EMOTION_COUNT] {
        self.counts.map(f64::from)
    }
}

/// Accumulates per-document emotion hits for one user.
#[derive(Debug, Clone, Default)]
pub struct EmotionTally {
    counts: [u32; EMOTION_COUNT],
    documents: usize,
}

impl EmotionTally {
    pub fn add<S: AsRef<str>>(&mut self, lexicon: &EmotionLexicon, words: &[S]) {
        let mask = lexicon.document_mask(words);
        for e in Emotion::ALL {
            if mask & e.bit() != 0 {
                self.counts[e.index()] += 1;
            }
        }
        self.documents += 1;
    }

    pub fn finish(self, user: &UserProfile) -> UserEmotionStats {
        let n = self.documents.max(1) as f64;
        UserEmotionStats {
            user_id: user.user_id().to_string(),
            class_label: user.class_label().to_string(),
            documents: self.documents,
            counts: self.counts,
            fractions: self.counts.map(|c| f64::from(c) / n),
        }
    }
}

pub fn emotion_stats_for(
    users: &[UserProfile],
    lexicon: &EmotionLexicon,
    scanner: &Scanner,
) -> Vec<UserEmotionStats> {
    nonempty_users(users, "emotion stats")
        .par_iter()
        .map(|user| {
            let mut tally = EmotionTally::default();
            for doc in user.documents() {
                tally.add(lexicon, &scanner.tokenize(&doc.text).normalized_words());
            }
            tally.finish(user)
        })
        .collect()
}

pub fn emotion_document_stats(
    corpus: &Corpus,
    class_label: &str,
    lexicon: &EmotionLexicon,
    scanner: &Scanner,
) -> Result<Vec<UserEmotionStats>, LexiconError> {
    Ok(emotion_stats_for(
        corpus.cohort(class_label)?,
        lexicon,
        scanner,
    ))
}

/// Class-level mean of per-user counts (the radar chart values).
pub fn class_mean_counts(stats: &[UserEmotionStats]) -> [f64; EMOTION_COUNT] {
    let mut out = [0.0; EMOTION_COUNT];
    if stats.is_empty() {
        return out;
    }
    for s in stats {
        for (o, c) in out.iter_mut().zip(s.counts) {
            *o += f64::from(c);
        }
    }
    out.map(|v| v / stats.len() as f64)
}
