//! End-to-end orchestration: corpus → analyses → report.
//!
//! Each user's documents are tokenized once. Term counts, lexicon tallies,
//! emotion tallies and marker profiles are all accumulated from that single
//! scan.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{monthly_gap_table_for, MarkerTally, UserBehaviorProfile, SECONDS_PER_HOUR};
use crate::corpus::{
    self, Corpus, CorpusError, IngestOptions, IngestReport, ParseMode, SummaryTable, UserProfile,
};
use crate::lexicons::{
    class_mean_counts, CategoryLexicon, CategoryTally, Emotion, EmotionLexicon, EmotionTally,
    LexiconError, UserCategoryProfile, UserEmotionStats, EMOTION_COUNT,
};
use crate::openvocab::{
    compare_pair_with_counts, merge_counts, reference_experiment_with, LanguageModel, LogBase,
    VocabError, Vocabulary, DEFAULT_LAMBDA,
};
use crate::report::{
    num, opt_num, AnalysisReport, BoxCategory, BoxplotChart, HeatmapChart, HeatmapPanel, LmCurve,
    LmPlot, Metadata, RadarChart, RadarSeries, ReportError, RunSettings, Section, SectionBody,
    SigAnnotation, Table, TimegapChart,
};
use crate::stats::{
    box_stats, emotion_correlation_matrix, welch_t_test, CorrelationMethod, SigMarker, StatsError,
    WelchResult, DEFAULT_ALPHA,
};
use crate::textscan::{default_scanner, ScanError, Scanner};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_REFERENCE_FRACTION: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CATEGORY_LEXICON: &str = "builtin:demo-liwc";
pub const DEFAULT_EMOTION_LEXICON: &str = "builtin:demo-emotions";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("openvocab: {0}")]
    Vocab(#[from] VocabError),
    #[error("lexicons: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("stats: {context}: {source}")]
    Stats {
        context: String,
        #[source]
        source: StatsError,
    },
    #[error("textscan: {0}")]
    Scan(#[from] ScanError),
    #[error("report: {0}")]
    Report(#[from] ReportError),
}

impl PipelineError {
    pub fn module(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Vocab(_) => "openvocab",
            PipelineError::Lexicon(_) => "lexicons",
            PipelineError::Stats { .. } => "stats",
            PipelineError::Scan(_) => "textscan",
            PipelineError::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Openvocab,
    Lexicons,
    Emotions,
    Behavior,
}

impl Analysis {
    pub const ALL: [Analysis; 4] = [
        Analysis::Openvocab,
        Analysis::Lexicons,
        Analysis::Emotions,
        Analysis::Behavior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Openvocab => "openvocab",
            Analysis::Lexicons => "lexicons",
            Analysis::Emotions => "emotions",
            Analysis::Behavior => "behavior",
        }
    }
}

impl std::str::FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown analysis {s:?} (expected openvocab, lexicons, emotions or behavior)"
                )
            })
    }
}

/// Which per-user emotion values feed the correlation heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationInput {
    /// Number of documents with at least one word of the emotion.
    Counts,
    /// The same count divided by the user's document count.
    #[default]
    Fractions,
}

impl std::str::FromStr for CorrelationInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "counts" => Ok(Self::Counts),
            "fractions" => Ok(Self::Fractions),
            other => Err(format!(
                "unknown correlation input {other:?} (expected counts or fractions)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortPair {
    pub positive: String,
    pub control: String,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_fraction() -> f64 {
    DEFAULT_REFERENCE_FRACTION
}
fn default_lexicons() -> Vec<String> {
    vec![DEFAULT_CATEGORY_LEXICON.to_string()]
}
fn default_emotion_lexicon() -> String {
    DEFAULT_EMOTION_LEXICON.to_string()
}
fn default_analyses() -> Vec<Analysis> {
    Analysis::ALL.to_vec()
}
fn default_out() -> PathBuf {
    PathBuf::from("report")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub pairs: Vec<CohortPair>,
    #[serde(default = "default_lexicons")]
    pub lexicons: Vec<String>,
    #[serde(default = "default_emotion_lexicon")]
    pub emotion_lexicon: String,
    /// Replacement emoticon list; the bundled one when absent.
    #[serde(default)]
    pub emoticons: Option<PathBuf>,
    /// Restrict category lexicons to these categories.
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_analyses")]
    pub analyses: Vec<Analysis>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default)]
    pub correlation: CorrelationMethod,
    #[serde(default)]
    pub correlation_input: CorrelationInput,
    #[serde(default = "default_fraction")]
    pub reference_sample_fraction: f64,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, pairs: Vec<CohortPair>) -> Self {
        Self {
            input: input.into(),
            pairs,
            lexicons: default_lexicons(),
            emotion_lexicon: default_emotion_lexicon(),
            emoticons: None,
            categories: None,
            lambda: DEFAULT_LAMBDA,
            log_base: LogBase::default(),
            alpha: DEFAULT_ALPHA,
            seed: DEFAULT_SEED,
            analyses: default_analyses(),
            out: default_out(),
            strict: true,
            correlation: CorrelationMethod::default(),
            correlation_input: CorrelationInput::default(),
            reference_sample_fraction: DEFAULT_REFERENCE_FRACTION,
        }
    }

    /// Parses a JSON config; relative paths resolve against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        self.input = join(&self.input);
        self.out = join(&self.out);
        self.emoticons = self.emoticons.as_deref().map(join);
        let lex = |s: &String| {
            if s.starts_with(crate::lexicons::BUILTIN_PREFIX) {
                s.clone()
            } else {
                join(Path::new(s)).to_string_lossy().into_owned()
            }
        };
        self.lexicons = self.lexicons.iter().map(lex).collect();
        self.emotion_lexicon = lex(&self.emotion_lexicon);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.pairs.is_empty() {
            return bad("at least one (positive, control) pair is required".into());
        }
        for p in &self.pairs {
            if p.positive == p.control {
                return bad(format!("pair uses class {:?} on both sides", p.positive));
            }
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must be in (0, 1), got {}", self.lambda));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if !(self.reference_sample_fraction > 0.0 && self.reference_sample_fraction <= 1.0) {
            return bad(format!(
                "reference_sample_fraction must be in (0, 1], got {}",
                self.reference_sample_fraction
            ));
        }
        if self.analyses.is_empty() {
            return bad("no analyses selected".into());
        }
        Ok(())
    }

    fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    /// Classes in order of first appearance, positives before controls
    /// within a pair.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.pairs {
            for c in [&p.positive, &p.control] {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    fn positives(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.pairs {
            if !out.contains(&p.positive) {
                out.push(p.positive.clone());
            }
        }
        out
    }
}

/// Everything a run produced, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: AnalysisReport,
    /// File name (under `models/`) → JSON.
    pub models: Vec<(String, String)>,
}

impl RunOutput {
    pub fn write(&self, dir: &Path, generated_at: &str) -> Result<Vec<PathBuf>, PipelineError> {
        let mut written = self.report.write(dir, generated_at)?;
        for (name, json) in &self.models {
            let path = dir.join("models").join(name);
            crate::report::write_text(&path, json)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Loads the corpus named in `cfg`, runs every selected analysis and writes
/// the report to `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mode = if cfg.strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    log::info!("ingesting {}", cfg.input.display());
    let (corpus, ingest) = corpus::ingest(&cfg.input, &IngestOptions { mode, now: None })?;
    let out = analyze(&corpus, &ingest, cfg)?;
    out.write(&cfg.out, &timestamp_now())?;
    Ok(out)
}

/// Per-user features from a single scan of the user's documents.
struct UserFeatures {
    counts: Option<HashMap<String, u64>>,
    categories: Vec<UserCategoryProfile>,
    emotions: Option<UserEmotionStats>,
    behavior: Option<UserBehaviorProfile>,
}

struct Resources {
    scanner: Scanner,
    lexicons: Vec<CategoryLexicon>,
    emotions: Option<EmotionLexicon>,
}

fn load_resources(cfg: &RunConfig) -> Result<Resources, PipelineError> {
    let scanner = match &cfg.emoticons {
        Some(p) => Scanner::from_file(p)?,
        None => default_scanner().clone(),
    };
    let mut lexicons = Vec::new();
    if cfg.wants(Analysis::Lexicons) {
        if cfg.lexicons.is_empty() {
            return Err(PipelineError::Config(
                "lexicons analysis selected but no lexicon given".into(),
            ));
        }
        for path in &cfg.lexicons {
            let lex = CategoryLexicon::load(path)?;
            let lex = match &cfg.categories {
                Some(names) => lex.select(names)?,
                None => lex,
            };
            for w in lex.warnings() {
                log::warn!("lexicon {path}: {w}");
            }
            lexicons.push(lex);
        }
    }
    let emotions = if cfg.wants(Analysis::Emotions) {
        Some(EmotionLexicon::load(&cfg.emotion_lexicon)?)
    } else {
        None
    };
    Ok(Resources {
        scanner,
        lexicons,
        emotions,
    })
}

fn scan_user(user: &UserProfile, cfg: &RunConfig, res: &Resources) -> UserFeatures {
    let want_counts = cfg.wants(Analysis::Openvocab);
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut cats: Vec<CategoryTally> = res.lexicons.iter().map(CategoryTally::new).collect();
    let mut emo = EmotionTally::default();
    let mut markers = MarkerTally::default();
    let need_words = want_counts || !res.lexicons.is_empty() || res.emotions.is_some();
    for doc in user.documents() {
        let stream = res.scanner.tokenize(&doc.text);
        if need_words {
            let words = stream.normalized_words();
            for (tally, lex) in cats.iter_mut().zip(&res.lexicons) {
                tally.add(lex, &words);
            }
            if let Some(lex) = &res.emotions {
                emo.add(lex, &words);
            }
            if want_counts {
                for w in words {
                    *counts.entry(w).or_insert(0) += 1;
                }
            }
        }
        if cfg.wants(Analysis::Behavior) {
            markers.add(doc, &Scanner::markers_of(doc, &stream));
        }
    }
    let nonempty = !user.documents().is_empty();
    if !nonempty {
        log::warn!(
            "user {} has no documents and is excluded from per-user analyses",
            user.user_id()
        );
    }
    UserFeatures {
        counts: want_counts.then_some(counts),
        categories: if nonempty {
            cats.into_iter()
                .zip(&res.lexicons)
                .map(|(t, lex)| t.finish(user, lex))
                .collect()
        } else {
            Vec::new()
        },
        emotions: (nonempty && res.emotions.is_some()).then(|| emo.finish(user)),
        behavior: (nonempty && cfg.wants(Analysis::Behavior)).then(|| markers.finish(user)),
    }
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// One row of the significance table.
#[derive(Debug, Clone)]
struct TestRow {
    analysis: &'static str,
    feature: String,
    first: String,
    second: String,
    marker: SigMarker,
    result: WelchResult,
}

struct Tests {
    alpha: f64,
    rows: Vec<TestRow>,
    skipped: Vec<String>,
}

impl Tests {
    /// Welch tests for every positive/control pair and every pair of distinct
    /// positive classes.
    fn compare(
        &mut self,
        analysis: &'static str,
        feature: &str,
        samples: &BTreeMap<&str, Vec<f64>>,
        cfg: &RunConfig,
    ) {
        let mut pairs: Vec<(String, String, SigMarker)> = cfg
            .pairs
            .iter()
            .map(|p| (p.positive.clone(), p.control.clone(), SigMarker::VsControl))
            .collect();
        let positives = cfg.positives();
        for (i, a) in positives.iter().enumerate() {
            for b in &positives[i + 1..] {
                pairs.push((a.clone(), b.clone(), SigMarker::VsPositive));
            }
        }
        for (a, b, marker) in pairs {
            let empty = Vec::new();
            let xa = samples.get(a.as_str()).unwrap_or(&empty);
            let xb = samples.get(b.as_str()).unwrap_or(&empty);
            match welch_t_test(xa, xb) {
                Ok(r) => self.rows.push(TestRow {
                    analysis,
                    feature: feature.to_string(),
                    first: a,
                    second: b,
                    marker,
                    result: r.with_alpha(self.alpha),
                }),
                Err(e) => self
                    .skipped
                    .push(format!("{analysis}/{feature} {a} vs {b} not tested: {e}")),
            }
        }
    }

    fn annotations(&self, analysis: &str, feature: &str) -> Vec<SigAnnotation> {
        self.rows
            .iter()
            .filter(|r| r.analysis == analysis && r.feature == feature && r.result.is_significant())
            .map(|r| SigAnnotation {
                marker: r.marker,
                first: r.first.clone(),
                second: r.second.clone(),
                p_value: r.result.p_value,
            })
            .collect()
    }

    fn table(&self) -> Table {
        let mut t = Table::new([
            "analysis",
            "feature",
            "first",
            "second",
            "relation",
            "n_first",
            "n_second",
            "mean_first",
            "mean_second",
            "t",
            "df",
            "p_value",
            "alpha",
            "significant",
        ]);
        for r in &self.rows {
            let w = &r.result;
            t.push([
                r.analysis.to_string(),
                r.feature.clone(),
                r.first.clone(),
                r.second.clone(),
                match r.marker {
                    SigMarker::VsControl => "positive_vs_control".into(),
                    SigMarker::VsPositive => "positive_vs_positive".into(),
                },
                w.n_a.to_string(),
                w.n_b.to_string(),
                num(w.mean_a),
                num(w.mean_b),
                num(w.t_statistic),
                num(w.degrees_of_freedom),
                num(w.p_value),
                num(w.significant_at),
                w.is_significant().to_string(),
            ]);
        }
        t
    }
}

fn boxplot(
    title: &str,
    y_label: &str,
    classes: &[String],
    features: &[String],
    samples: &BTreeMap<String, BTreeMap<&str, Vec<f64>>>,
    analysis: &str,
    tests: &Tests,
) -> BoxplotChart {
    let categories = features
        .iter()
        .map(|f| BoxCategory {
            name: f.clone(),
            boxes: classes
                .iter()
                .map(|c| {
                    samples
                        .get(f)
                        .and_then(|m| m.get(c.as_str()))
                        .and_then(|xs| box_stats(xs).ok())
                })
                .collect(),
            markers: tests.annotations(analysis, f),
        })
        .collect();
    BoxplotChart {
        title: title.into(),
        y_label: y_label.into(),
        classes: classes.to_vec(),
        categories,
    }
}

fn model_json(model: &LanguageModel, pair: &CohortPair) -> Result<String, PipelineError> {
    #[derive(Serialize)]
    struct ModelFile<'a> {
        class_label: &'a str,
        positive: &'a str,
        control: &'a str,
        lambda: f64,
        collection_tokens: u64,
        support_size: usize,
        probabilities: BTreeMap<&'a str, f64>,
    }
    let file = ModelFile {
        class_label: &model.class_label,
        positive: &pair.positive,
        control: &pair.control,
        lambda: model.lambda,
        collection_tokens: model.collection().total(),
        support_size: model.support().len(),
        probabilities: model.iter().collect(),
    };
    Ok(serde_json::to_string(&file).map_err(ReportError::from)? + "\n")
}

/// The corpus summary as a report table.
pub fn summary_table(summary: &SummaryTable) -> Table {
    let mut t = Table::new([
        "class",
        "users",
        "documents",
        "mean_documents_per_user",
        "mean_words_per_document",
        "mean_activity_days",
        "empty_documents",
    ]);
    for r in &summary.rows {
        t.push([
            r.class_label.clone(),
            r.users.to_string(),
            r.documents.to_string(),
            num(r.mean_documents_per_user),
            num(r.mean_words_per_document),
            num(r.mean_activity_days),
            r.empty_documents.to_string(),
        ]);
    }
    t
}

/// Current UTC time for `metadata.json`.
pub fn timestamp_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Runs the selected analyses over an in-memory corpus.
pub fn analyze(
    corpus: &Corpus,
    ingest: &IngestReport,
    cfg: &RunConfig,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let classes = cfg.classes();
    for c in &classes {
        if !corpus.has_class(c) {
            let known: Vec<&str> = corpus.class_labels().collect();
            return Err(PipelineError::Config(format!(
                "class {c:?} not found in corpus (available: {})",
                known.join(", ")
            )));
        }
    }
    let res = load_resources(cfg)?;

    log::info!("scanning {} classes", classes.len());
    let mut features: BTreeMap<&str, Vec<UserFeatures>> = BTreeMap::new();
    for c in &classes {
        let users = corpus.cohort(c)?;
        let f: Vec<UserFeatures> = users.par_iter().map(|u| scan_user(u, cfg, &res)).collect();
        features.insert(c.as_str(), f);
    }

    let mut sections: Vec<Section> = Vec::new();
    let mut models = Vec::new();
    let mut notes = Vec::new();
    let mut tests = Tests {
        alpha: cfg.alpha,
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    let mut lexicon_digests = BTreeMap::new();

    let summary = corpus::summarize(corpus);
    for r in summary.rows.iter().filter(|r| r.warning) {
        notes.push(format!(
            "class {} has no users or no documents",
            r.class_label
        ));
    }
    let empty_documents = summary.rows.iter().map(|r| r.empty_documents).sum();
    sections.push(Section {
        name: "summary".into(),
        body: SectionBody::Table(summary_table(&summary)),
    });

    if cfg.wants(Analysis::Openvocab) {
        notes.push(
            "vocabulary terms include hashtags and mentions with the sigil stripped, on every platform"
                .into(),
        );
        openvocab_sections(corpus, cfg, &features, &mut sections, &mut models)?;
    }
    if cfg.wants(Analysis::Lexicons) {
        for (li, lex) in res.lexicons.iter().enumerate() {
            lexicon_digests.insert(lex.name.clone(), lex.digest().to_string());
            lexicon_sections(cfg, &classes, li, lex, &features, &mut sections, &mut tests);
        }
    }
    if let Some(lex) = &res.emotions {
        lexicon_digests.insert(lex.name.clone(), lex.digest().to_string());
        emotion_sections(
            cfg,
            &classes,
            &features,
            &mut sections,
            &mut tests,
            &mut notes,
        )?;
    }
    if cfg.wants(Analysis::Behavior) {
        behavior_sections(corpus, cfg, &classes, &features, &mut sections, &mut tests)?;
    }

    if !tests.rows.is_empty() {
        sections.push(Section {
            name: "welch_tests".into(),
            body: SectionBody::Table(tests.table()),
        });
        notes.push(format!(
            "{} Welch t-tests at alpha = {}; no correction for multiple comparisons was applied.",
            tests.rows.len(),
            cfg.alpha
        ));
    }
    notes.extend(tests.skipped.iter().cloned());
    if !ingest.skipped.is_empty() {
        notes.push(format!(
            "{} malformed input lines skipped (lenient mode)",
            ingest.skipped.len()
        ));
    }

    let metadata = Metadata {
        artifact_version: ARTIFACT_VERSION.to_string(),
        corpus_digest: corpus.digest(),
        platform: corpus.platform().to_string(),
        records: ingest.records,
        skipped_records: ingest.skipped.len(),
        empty_documents,
        settings: RunSettings {
            lambda: cfg.lambda,
            log_base: cfg.log_base.label().to_string(),
            seed: cfg.seed,
            alpha: cfg.alpha,
            correlation_method: format!("{:?}", cfg.correlation).to_lowercase(),
            correlation_input: format!("{:?}", cfg.correlation_input).to_lowercase(),
            reference_fraction: cfg.reference_sample_fraction,
            analyses: cfg.analyses.iter().map(|a| a.name().to_string()).collect(),
            pairs: cfg
                .pairs
                .iter()
                .map(|p| (p.positive.clone(), p.control.clone()))
                .collect(),
        },
        lexicon_digests,
        tests_performed: tests.rows.len(),
        notes,
    };
    Ok(RunOutput {
        report: AnalysisReport { metadata, sections },
        models,
    })
}

fn openvocab_sections(
    corpus: &Corpus,
    cfg: &RunConfig,
    features: &BTreeMap<&str, Vec<UserFeatures>>,
    sections: &mut Vec<Section>,
    models: &mut Vec<(String, String)>,
) -> Result<(), PipelineError> {
    let counts_of = |class: &str| -> Vec<&HashMap<String, u64>> {
        features[class]
            .iter()
            .filter_map(|f| f.counts.as_ref())
            .collect()
    };
    let vocab_of = |class: &str| {
        let merged = counts_of(class)
            .into_par_iter()
            .fold(HashMap::new, |mut acc: HashMap<String, u64>, c| {
                for (w, n) in c {
                    *acc.entry(w.clone()).or_insert(0) += n;
                }
                acc
            })
            .reduce(HashMap::new, merge_counts);
        Vocabulary::from_counts(class, merged)
    };
    let mut vocab: BTreeMap<&str, Vocabulary> = BTreeMap::new();
    for c in cfg.classes() {
        let v = vocab_of(&c);
        vocab.insert(features.get_key_value(c.as_str()).expect("scanned").0, v);
    }
    let mut occurrences: HashMap<&str, usize> = HashMap::new();
    for p in &cfg.pairs {
        *occurrences.entry(p.positive.as_str()).or_default() += 1;
        *occurrences.entry(p.control.as_str()).or_default() += 1;
    }

    let mut columns = vec!["metric".to_string()];
    columns.extend(
        cfg.pairs
            .iter()
            .map(|p| format!("{} vs {}", p.positive, p.control)),
    );
    let metrics = [
        "unique_words_positive",
        "unique_words_control",
        "jaccard",
        "difference_positive_control",
        "difference_control_positive",
        "kl_positive_control",
        "kl_control_positive",
        "kl_control_control",
    ];
    let mut rows: Vec<Vec<String>> = metrics.iter().map(|m| vec![m.to_string()]).collect();
    let mut reference = Table::new([
        "positive",
        "control",
        "sample_class",
        "sampled",
        "scored",
        "mean_kl_to_positive",
        "mean_kl_to_control",
        "nearest_positive",
    ]);
    let mut reference_users = Table::new([
        "positive",
        "control",
        "user_id",
        "class",
        "kl_to_positive",
        "kl_to_control",
        "nearest",
    ]);

    for (pi, pair) in cfg.pairs.iter().enumerate() {
        let (pv, cv) = (
            &vocab[pair.positive.as_str()],
            &vocab[pair.control.as_str()],
        );
        let analysis = compare_pair_with_counts(
            pv,
            cv,
            &counts_of(&pair.control),
            cfg.lambda,
            cfg.log_base,
            cfg.seed,
        )?;
        let c = &analysis.comparison;
        let values = [
            c.unique_positive.to_string(),
            c.unique_control.to_string(),
            opt_num(c.jaccard.index),
            c.jaccard.only_first.to_string(),
            c.jaccard.only_second.to_string(),
            num(c.kl_positive_control),
            num(c.kl_control_positive),
            opt_num(c.kl_control_control),
        ];
        for (row, v) in rows.iter_mut().zip(values) {
            row.push(v);
        }

        let lookup: HashMap<&str, &HashMap<String, u64>> = [&pair.positive, &pair.control]
            .iter()
            .flat_map(|class| {
                corpus
                    .cohort(class)
                    .expect("validated")
                    .iter()
                    .zip(&features[class.as_str()])
                    .filter_map(|(u, f)| f.counts.as_ref().map(|c| (u.user_id(), c)))
            })
            .collect();
        let exp = reference_experiment_with(
            corpus,
            &analysis.positive_model,
            &analysis.control_model,
            cfg.lambda,
            cfg.reference_sample_fraction,
            cfg.seed.wrapping_add(1000 * pi as u64),
            cfg.log_base,
            &|u: &UserProfile| {
                lookup
                    .get(u.user_id())
                    .map(|c| (*c).clone())
                    .unwrap_or_default()
            },
        )?;
        for s in &exp.summaries {
            reference.push([
                pair.positive.clone(),
                pair.control.clone(),
                s.class_label.clone(),
                s.sampled.to_string(),
                s.scored.to_string(),
                opt_num(s.mean_kl_to_positive),
                opt_num(s.mean_kl_to_control),
                s.nearest_positive.to_string(),
            ]);
        }
        for u in &exp.users {
            let (kp, kc, nearest) = match &u.score {
                Some(s) => (
                    num(s.kl_to_positive),
                    num(s.kl_to_control),
                    format!("{:?}", s.nearest).to_lowercase(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            reference_users.push([
                pair.positive.clone(),
                pair.control.clone(),
                u.user_id.clone(),
                u.class_label.clone(),
                kp,
                kc,
                nearest,
            ]);
        }

        let tag = format!("{}_{}", file_stem(&pair.positive), file_stem(&pair.control));
        sections.push(Section {
            name: format!("lm_{tag}"),
            body: SectionBody::Lmplot(LmPlot {
                title: format!("Language models: {} vs {}", pair.positive, pair.control),
                support_size: analysis.positive_model.support().len(),
                curves: [&analysis.positive_model, &analysis.control_model]
                    .iter()
                    .map(|m| LmCurve::from_sorted(&m.class_label, &m.rank_curve()))
                    .collect(),
            }),
        });
        for model in [&analysis.positive_model, &analysis.control_model] {
            let name = if occurrences[model.class_label.as_str()] == 1 {
                format!("lm_{}.json", file_stem(&model.class_label))
            } else {
                format!("lm_{}__{tag}.json", file_stem(&model.class_label))
            };
            models.push((name, model_json(model, pair)?));
        }
    }
    sections.push(Section {
        name: "vocab_comparison".into(),
        body: SectionBody::Table(Table { columns, rows }),
    });
    sections.push(Section {
        name: "reference_lm".into(),
        body: SectionBody::Table(reference),
    });
    sections.push(Section {
        name: "reference_lm_users".into(),
        body: SectionBody::Table(reference_users),
    });
    Ok(())
}

fn lexicon_sections(
    cfg: &RunConfig,
    classes: &[String],
    li: usize,
    lex: &CategoryLexicon,
    features: &BTreeMap<&str, Vec<UserFeatures>>,
    sections: &mut Vec<Section>,
    tests: &mut Tests,
) {
    let names: Vec<String> = lex.category_names().iter().map(|s| s.to_string()).collect();
    let mut cols = vec![
        "user_id".to_string(),
        "class".to_string(),
        "documents".to_string(),
    ];
    cols.extend(names.iter().cloned());
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    let mut samples: BTreeMap<String, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for c in classes {
        for f in &features[c.as_str()] {
            let Some(p) = f.categories.get(li) else {
                continue;
            };
            let mut row = vec![
                p.user_id.clone(),
                p.class_label.clone(),
                p.documents.to_string(),
            ];
            for n in &names {
                let v = p.proportions[n];
                row.push(num(v));
                samples
                    .entry(n.clone())
                    .or_default()
                    .entry(c.as_str())
                    .or_default()
                    .push(v);
            }
            table.rows.push(row);
        }
    }
    let analysis = "lexicons";
    for n in &names {
        let s = samples.get(n).cloned().unwrap_or_default();
        tests.compare(analysis, &format!("{}:{n}", lex.name), &s, cfg);
    }
    let stem = file_stem(&lex.name);
    // Box plot features carry the lexicon prefix in the test rows.
    let keyed: BTreeMap<String, BTreeMap<&str, Vec<f64>>> = samples
        .into_iter()
        .map(|(k, v)| (format!("{}:{k}", lex.name), v))
        .collect();
    let feature_keys: Vec<String> = names.iter().map(|n| format!("{}:{n}", lex.name)).collect();
    let mut chart = boxplot(
        &format!("Proportion of documents per category ({})", lex.name),
        "proportion of documents",
        classes,
        &feature_keys,
        &keyed,
        analysis,
        tests,
    );
    for (cat, n) in chart.categories.iter_mut().zip(&names) {
        cat.name = n.clone();
    }
    sections.push(Section {
        name: format!("category_profiles_{stem}"),
        body: SectionBody::Table(table),
    });
    sections.push(Section {
        name: format!("boxplot_{stem}"),
        body: SectionBody::Boxplot(chart),
    });
}

fn emotion_sections(
    cfg: &RunConfig,
    classes: &[String],
    features: &BTreeMap<&str, Vec<UserFeatures>>,
    sections: &mut Vec<Section>,
    tests: &mut Tests,
    notes: &mut Vec<String>,
) -> Result<(), PipelineError> {
    let stats_of = |c: &str| -> Vec<UserEmotionStats> {
        features[c]
            .iter()
            .filter_map(|f| f.emotions.clone())
            .collect()
    };
    let mut cols = vec![
        "user_id".to_string(),
        "class".to_string(),
        "documents".to_string(),
    ];
    for e in Emotion::ALL {
        cols.push(format!("{}_count", e.name()));
    }
    for e in Emotion::ALL {
        cols.push(format!("{}_fraction", e.name()));
    }
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    let mut series = Vec::new();
    let mut samples: BTreeMap<String, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    let mut per_class: BTreeMap<&str, Vec<UserEmotionStats>> = BTreeMap::new();
    for c in classes {
        let stats = stats_of(c);
        for s in &stats {
            let mut row = vec![
                s.user_id.clone(),
                s.class_label.clone(),
                s.documents.to_string(),
            ];
            row.extend(s.counts.iter().map(|v| v.to_string()));
            row.extend(s.fractions.iter().map(|v| num(*v)));
            table.rows.push(row);
            for e in Emotion::ALL {
                samples
                    .entry(e.name().to_string())
                    .or_default()
                    .entry(c.as_str())
                    .or_default()
                    .push(s.fraction(e));
            }
        }
        series.push(RadarSeries {
            label: c.clone(),
            values: class_mean_counts(&stats).to_vec(),
        });
        per_class.insert(c.as_str(), stats);
    }
    let names: Vec<String> = Emotion::ALL.iter().map(|e| e.name().to_string()).collect();
    for n in &names {
        let s = samples.get(n).cloned().unwrap_or_default();
        tests.compare("emotions", n, &s, cfg);
    }
    sections.push(Section {
        name: "emotion_stats".into(),
        body: SectionBody::Table(table),
    });
    sections.push(Section {
        name: "radar_emotions".into(),
        body: SectionBody::Radar(RadarChart {
            title: "Mean number of documents per emotion".into(),
            axes: names.clone(),
            series,
        }),
    });
    sections.push(Section {
        name: "boxplot_emotions".into(),
        body: SectionBody::Boxplot(boxplot(
            "Fraction of documents per emotion",
            "fraction of documents",
            classes,
            &names,
            &samples,
            "emotions",
            tests,
        )),
    });

    let mut corr = Table::new([
        "positive",
        "control",
        "class",
        "emotion_a",
        "emotion_b",
        "r",
    ]);
    for pair in &cfg.pairs {
        let mut panels = Vec::new();
        for class in [&pair.positive, &pair.control] {
            let rows: Vec<[f64; EMOTION_COUNT]> = per_class[class.as_str()]
                .iter()
                .map(|s| match cfg.correlation_input {
                    CorrelationInput::Counts => s.counts_f64(),
                    CorrelationInput::Fractions => s.fractions,
                })
                .collect();
            let matrix = match emotion_correlation_matrix(&rows, cfg.correlation) {
                Ok(m) => m,
                Err(StatsError::SampleTooSmall { got, .. }) => {
                    notes.push(format!(
                        "emotion correlations for {class}: only {got} users, matrix left empty"
                    ));
                    let mut m = crate::stats::CorrelationMatrix::identity(names.clone());
                    for row in &mut m.values {
                        row.iter_mut().for_each(|v| *v = None);
                    }
                    m
                }
                Err(source) => {
                    return Err(PipelineError::Stats {
                        context: format!("emotion correlations for {class}"),
                        source,
                    })
                }
            };
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    corr.push([
                        pair.positive.clone(),
                        pair.control.clone(),
                        class.clone(),
                        names[i].clone(),
                        names[j].clone(),
                        opt_num(matrix.get(i, j)),
                    ]);
                }
            }
            panels.push(HeatmapPanel {
                label: class.clone(),
                matrix,
            });
        }
        sections.push(Section {
            name: format!(
                "heatmap_{}_{}",
                file_stem(&pair.positive),
                file_stem(&pair.control)
            ),
            body: SectionBody::Heatmap(HeatmapChart {
                title: format!(
                    "Emotion correlations: {} vs {}",
                    pair.positive, pair.control
                ),
                panels,
            }),
        });
    }
    sections.push(Section {
        name: "emotion_correlations".into(),
        body: SectionBody::Table(corr),
    });
    Ok(())
}

fn behavior_sections(
    corpus: &Corpus,
    cfg: &RunConfig,
    classes: &[String],
    features: &BTreeMap<&str, Vec<UserFeatures>>,
    sections: &mut Vec<Section>,
    tests: &mut Tests,
) -> Result<(), PipelineError> {
    use crate::textscan::Marker;
    let mut cols = vec![
        "user_id".to_string(),
        "class".to_string(),
        "documents".to_string(),
    ];
    cols.extend(Marker::ALL.iter().map(|m| m.name().to_string()));
    cols.extend(
        [
            "mean_hashtag_ratio",
            "mean_mention_ratio",
            "mean_time_gap_hours",
        ]
        .map(String::from),
    );
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    let mut samples: BTreeMap<String, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for c in classes {
        for p in features[c.as_str()]
            .iter()
            .filter_map(|f| f.behavior.as_ref())
        {
            let mut row = vec![
                p.user_id.clone(),
                p.class_label.clone(),
                p.documents.to_string(),
            ];
            for m in Marker::ALL {
                if p.applicable(m) {
                    row.push(num(p.fraction(m)));
                    samples
                        .entry(m.name().into())
                        .or_default()
                        .entry(c.as_str())
                        .or_default()
                        .push(p.fraction(m));
                } else {
                    row.push(String::new());
                }
            }
            row.push(num(p.mean_hashtag_ratio));
            row.push(num(p.mean_mention_ratio));
            row.push(
                p.mean_time_gap
                    .map(|g| num(g / SECONDS_PER_HOUR))
                    .unwrap_or_default(),
            );
            for (k, v) in [
                ("hashtag_ratio", Some(p.mean_hashtag_ratio)),
                ("mention_ratio", Some(p.mean_mention_ratio)),
            ] {
                samples
                    .entry(k.into())
                    .or_default()
                    .entry(c.as_str())
                    .or_default()
                    .extend(v);
            }
            if let Some(g) = p.mean_time_gap {
                samples
                    .entry("time_gap_hours".into())
                    .or_default()
                    .entry(c.as_str())
                    .or_default()
                    .push(g / SECONDS_PER_HOUR);
            }
            table.rows.push(row);
        }
    }
    let markers: Vec<String> = Marker::ALL
        .iter()
        .map(|m| m.name().to_string())
        .filter(|m| samples.contains_key(m))
        .collect();
    let mut features_tested = markers.clone();
    features_tested.extend(["hashtag_ratio", "mention_ratio", "time_gap_hours"].map(String::from));
    for f in &features_tested {
        let s = samples.get(f).cloned().unwrap_or_default();
        tests.compare("behavior", f, &s, cfg);
    }
    sections.push(Section {
        name: "behavior_profiles".into(),
        body: SectionBody::Table(table),
    });
    if !markers.is_empty() {
        sections.push(Section {
            name: "boxplot_markers".into(),
            body: SectionBody::Boxplot(boxplot(
                "Fraction of documents with each engagement marker",
                "fraction of documents",
                classes,
                &markers,
                &samples,
                "behavior",
                tests,
            )),
        });
    }

    let cohorts = classes
        .iter()
        .map(|c| corpus.cohort(c).map(|u| (c.as_str(), u)))
        .collect::<Result<Vec<_>, _>>()?;
    let gaps = monthly_gap_table_for(cohorts);
    let mut t = Table::new(["class", "month", "mean_gap_hours", "std_gap_hours", "gaps"]);
    for (class, months) in &gaps.classes {
        for (m, cell) in months {
            t.push([
                class.clone(),
                m.to_string(),
                num(cell.mean_hours()),
                num(cell.std_hours()),
                cell.count.to_string(),
            ]);
        }
    }
    sections.push(Section {
        name: "monthly_gaps".into(),
        body: SectionBody::Table(t),
    });
    if !gaps.is_empty() {
        sections.push(Section {
            name: "timegap".into(),
            body: SectionBody::Lineplot(TimegapChart {
                title: "Mean time-gap between consecutive documents by month".into(),
                table: gaps,
            }),
        });
    }
    Ok(())
}
