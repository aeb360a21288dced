//! Data model for cohort corpora and line-delimited JSON ingestion.
//!
//! A [`Corpus`] is built once and never mutated afterwards. Users are grouped
//! into cohorts keyed by their free-form class label, and each user's
//! documents are kept in chronological order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::textscan;

/// Earliest timestamp accepted at ingest (1990-01-01T00:00:00Z).
pub const MIN_TIMESTAMP_SECS: i64 = 631_152_000;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no records")]
    NoRecords,
    #[error("line {line}: duplicate doc_id {doc_id:?} for user {user_id:?}")]
    DuplicateDocId {
        line: usize,
        user_id: String,
        doc_id: String,
    },
    #[error("line {line}: user {user_id:?} is labelled both {first:?} and {second:?}")]
    ConflictingClass {
        line: usize,
        user_id: String,
        first: String,
        second: String,
    },
    #[error("document {doc_id:?} belongs to user {found:?}, not {expected:?}")]
    ForeignDocument {
        doc_id: String,
        expected: String,
        found: String,
    },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("invalid document {doc_id:?}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Reddit,
    Twitter,
    Other,
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Platform::Reddit => "reddit",
            Platform::Twitter => "twitter",
            Platform::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmissionType {
    Post,
    Comment,
}

/// One post, comment or tweet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub platform: Platform,
    /// Only meaningful for Reddit.
    pub submission_type: Option<SubmissionType>,
}

impl Document {
    fn validate(&self, now: DateTime<Utc>) -> Result<(), String> {
        if self.submission_type.is_some() && self.platform != Platform::Reddit {
            return Err(format!(
                "submission_type is only allowed for reddit documents (platform is {})",
                self.platform
            ));
        }
        let secs = self.timestamp.timestamp();
        if secs < MIN_TIMESTAMP_SECS {
            return Err(format!(
                "timestamp {} is before 1990-01-01",
                format_timestamp(&self.timestamp)
            ));
        }
        if self.timestamp > now {
            return Err(format!(
                "timestamp {} is in the future",
                format_timestamp(&self.timestamp)
            ));
        }
        Ok(())
    }

    /// Whitespace-delimited word count, as used by the summary table.
    pub fn word_count(&self) -> usize {
        textscan::whitespace_word_count(&self.text)
    }
}

/// A single user's chronologically ordered document stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    user_id: String,
    class_label: String,
    documents: Vec<Document>,
}

impl UserProfile {
    /// Builds a profile, sorting documents by (timestamp, doc_id).
    pub fn new(
        user_id: impl Into<String>,
        class_label: impl Into<String>,
        mut documents: Vec<Document>,
    ) -> Result<Self, CorpusError> {
        let user_id = user_id.into();
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.user_id != user_id {
                return Err(CorpusError::ForeignDocument {
                    doc_id: doc.doc_id.clone(),
                    expected: user_id,
                    found: doc.user_id.clone(),
                });
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId {
                    line: 0,
                    user_id: user_id.clone(),
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        sort_chronologically(&mut documents);
        Ok(Self {
            user_id,
            class_label: class_label.into(),
            documents,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    /// Days between the first and the last document.
    pub fn activity_days(&self) -> f64 {
        match (self.documents.first(), self.documents.last()) {
            (Some(first), Some(last)) => {
                (last.timestamp - first.timestamp).num_seconds() as f64 / SECONDS_PER_DAY
            }
            _ => 0.0,
        }
    }
}

fn sort_chronologically(docs: &mut [Document]) {
    docs.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

/// Immutable set of labelled cohorts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    cohorts: BTreeMap<String, Vec<UserProfile>>,
    platform: Platform,
}

impl Corpus {
    pub fn cohorts(&self) -> &BTreeMap<String, Vec<UserProfile>> {
        &self.cohorts
    }

    pub fn cohort(&self, class_label: &str) -> Result<&[UserProfile], CorpusError> {
        self.cohorts
            .get(class_label)
            .map(Vec::as_slice)
            .ok_or_else(|| CorpusError::UnknownClass(class_label.to_string()))
    }

    pub fn has_class(&self, class_label: &str) -> bool {
        self.cohorts.contains_key(class_label)
    }

    pub fn class_labels(&self) -> impl Iterator<Item = &str> {
        self.cohorts.keys().map(String::as_str)
    }

    /// The platform shared by every document, or `Other` for mixed corpora.
    pub fn platform(&self) -> Platform {
        self.platform
    }

    pub fn users(&self) -> impl Iterator<Item = &UserProfile> {
        self.cohorts.values().flatten()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.users().flat_map(|u| u.documents.iter())
    }

    pub fn user_count(&self) -> usize {
        self.cohorts.values().map(Vec::len).sum()
    }

    pub fn document_count(&self) -> usize {
        self.users().map(|u| u.documents.len()).sum()
    }

    /// Writes the corpus back out in the ingest record format.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for user in self.users() {
            for doc in &user.documents {
                let record = RecordRef::new(doc, &user.class_label);
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSONL export.
    pub fn digest(&self) -> String {
        let mut hasher = HashWriter(Sha256::new());
        self.write_jsonl(&mut hasher)
            .expect("hashing into memory cannot fail");
        hex::encode(hasher.0.finalize())
    }
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Accumulates documents and enforces the cross-record invariants.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    users: HashMap<String, PendingUser>,
}

#[derive(Debug)]
struct PendingUser {
    class_label: String,
    documents: Vec<Document>,
    doc_ids: HashSet<String>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, class_label: &str, doc: Document) -> Result<(), CorpusError> {
        self.push_at(0, class_label, doc)
    }

    fn push_at(
        &mut self,
        line: usize,
        class_label: &str,
        doc: Document,
    ) -> Result<(), CorpusError> {
        let user = self
            .users
            .entry(doc.user_id.clone())
            .or_insert_with(|| PendingUser {
                class_label: class_label.to_string(),
                documents: Vec::new(),
                doc_ids: HashSet::new(),
            });
        if user.class_label != class_label {
            return Err(CorpusError::ConflictingClass {
                line,
                user_id: doc.user_id,
                first: user.class_label.clone(),
                second: class_label.to_string(),
            });
        }
        if !user.doc_ids.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId {
                line,
                user_id: doc.user_id,
                doc_id: doc.doc_id,
            });
        }
        user.documents.push(doc);
        Ok(())
    }

    pub fn build(self) -> Result<Corpus, CorpusError> {
        if self.users.is_empty() {
            return Err(CorpusError::NoRecords);
        }
        let mut platform = None;
        let mut cohorts: BTreeMap<String, Vec<UserProfile>> = BTreeMap::new();
        for (user_id, mut pending) in self.users {
            for doc in &pending.documents {
                platform = match platform {
                    None => Some(doc.platform),
                    Some(p) if p == doc.platform => Some(p),
                    Some(_) => Some(Platform::Other),
                };
            }
            sort_chronologically(&mut pending.documents);
            cohorts
                .entry(pending.class_label.clone())
                .or_default()
                .push(UserProfile {
                    user_id,
                    class_label: pending.class_label,
                    documents: pending.documents,
                });
        }
        for users in cohorts.values_mut() {
            users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        }
        Ok(Corpus {
            cohorts,
            platform: platform.unwrap_or(Platform::Other),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub mode: ParseMode,
    /// Reference instant for the future-timestamp check; defaults to the
    /// current time.
    pub now: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: usize,
    pub skipped: Vec<SkippedLine>,
}

#[derive(Debug, Deserialize)]
struct Record {
    doc_id: String,
    user_id: String,
    class: String,
    timestamp: String,
    text: String,
    platform: Platform,
    #[serde(default)]
    submission_type: Option<SubmissionType>,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    doc_id: &'a str,
    user_id: &'a str,
    class: &'a str,
    timestamp: String,
    text: &'a str,
    platform: Platform,
    #[serde(skip_serializing_if = "Option::is_none")]
    submission_type: Option<SubmissionType>,
}

impl<'a> RecordRef<'a> {
    fn new(doc: &'a Document, class: &'a str) -> Self {
        Self {
            doc_id: &doc.doc_id,
            user_id: &doc.user_id,
            class,
            timestamp: format_timestamp(&doc.timestamp),
            text: &doc.text,
            platform: doc.platform,
            submission_type: doc.submission_type,
        }
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an ISO-8601 timestamp. Offsets are normalized to UTC and values
/// without a zone are taken as UTC. Sub-second precision is dropped.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    let parsed = DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.with_timezone(&Utc))
        .or_else(|_| {
            ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
                .iter()
                .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
                .map(|naive| Utc.from_utc_datetime(&naive))
                .ok_or_else(|| format!("invalid timestamp {raw:?}"))
        })?;
    Ok(parsed.with_nanosecond(0).unwrap_or(parsed))
}

fn parse_line(line: &str, now: DateTime<Utc>) -> Result<(String, Document), String> {
    let record: Record = serde_json::from_str(line).map_err(|e| format!("invalid record: {e}"))?;
    let doc = Document {
        timestamp: parse_timestamp(&record.timestamp)?,
        doc_id: record.doc_id,
        user_id: record.user_id,
        text: record.text,
        platform: record.platform,
        submission_type: record.submission_type,
    };
    doc.validate(now)?;
    Ok((record.class, doc))
}

/// Reads line-delimited records from `reader`. Blank lines are ignored.
pub fn ingest_reader<R: BufRead>(
    reader: R,
    options: &IngestOptions,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let now = options.now.unwrap_or_else(Utc::now);
    let mut builder = CorpusBuilder::new();
    let mut report = IngestReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, now) {
            Ok((class, doc)) => {
                builder.push_at(line_no, &class, doc)?;
                report.records += 1;
            }
            Err(reason) => match options.mode {
                ParseMode::Strict => {
                    return Err(CorpusError::Malformed {
                        line: line_no,
                        reason,
                    })
                }
                ParseMode::Lenient => {
                    log::warn!("skipping line {line_no}: {reason}");
                    report.skipped.push(SkippedLine {
                        line: line_no,
                        reason,
                    });
                }
            },
        }
    }
    let corpus = builder.build()?;
    Ok((corpus, report))
}

pub fn ingest(path: &Path, options: &IngestOptions) -> Result<(Corpus, IngestReport), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(BufReader::with_capacity(1 << 20, file), options)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub class_label: String,
    pub users: usize,
    pub documents: usize,
    pub mean_documents_per_user: f64,
    pub mean_words_per_document: f64,
    pub mean_activity_days: f64,
    pub empty_documents: usize,
    /// Set when the cohort has no users or no documents.
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn row(&self, class_label: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.class_label == class_label)
    }

    pub fn total_documents(&self) -> usize {
        self.rows.iter().map(|r| r.documents).sum()
    }
}

pub fn summarize_users(class_label: &str, users: &[UserProfile]) -> SummaryRow {
    let documents: usize = users.iter().map(|u| u.documents.len()).sum();
    let words: usize = users
        .iter()
        .flat_map(|u| &u.documents)
        .map(Document::word_count)
        .sum();
    let empty_documents = users
        .iter()
        .flat_map(|u| &u.documents)
        .filter(|d| d.text.is_empty())
        .count();
    let activity: f64 = users.iter().map(UserProfile::activity_days).sum();
    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    SummaryRow {
        class_label: class_label.to_string(),
        users: users.len(),
        documents,
        mean_documents_per_user: ratio(documents as f64, users.len()),
        mean_words_per_document: ratio(words as f64, documents),
        mean_activity_days: ratio(activity, users.len()),
        empty_documents,
        warning: users.is_empty() || documents == 0,
    }
}

pub fn summarize(corpus: &Corpus) -> SummaryTable {
    let rows = corpus
        .cohorts
        .iter()
        .map(|(label, users)| summarize_users(label, users))
        .collect();
    SummaryTable { rows }
}
