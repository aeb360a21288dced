//! Seeded synthetic corpora with known cohort differences.
//!
//! Every document has a fixed number of content tokens and no punctuation.
//! One slot holds exactly one joy or sadness word. The other slots draw a
//! hashtag, a first-person pronoun, a cohort topic word or a Zipf-distributed
//! filler word.

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusBuilder, CorpusError, Document, Platform, SubmissionType};
use crate::lexicons::{CategoryLexicon, EmotionLexicon};

pub const JOY_WORDS: [&str; 8] = [
    "happy", "glad", "joyful", "delight", "smile", "laugh", "fun", "cheerful",
];
pub const SADNESS_WORDS: [&str; 8] = [
    "sad", "gloomy", "cry", "tears", "lonely", "sorrow", "mourn", "hopeless",
];
pub const PRONOUNS: [&str; 4] = ["i", "me", "my", "myself"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthPlatform {
    Reddit,
    Twitter,
    /// Even-numbered users on Reddit, odd-numbered on Twitter.
    Mixed,
}

impl std::str::FromStr for SynthPlatform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reddit" => Ok(Self::Reddit),
            "twitter" => Ok(Self::Twitter),
            "mixed" => Ok(Self::Mixed),
            other => Err(format!(
                "unknown platform {other:?} (expected reddit, twitter or mixed)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub positive_label: String,
    pub control_label: String,
    pub positive_users: usize,
    pub control_users: usize,
    pub docs_per_user: usize,
    pub tokens_per_doc: usize,
    pub platform: SynthPlatform,
    /// Per-token first-person pronoun rate for controls; positives use
    /// `pronoun_multiplier` times this.
    pub pronoun_rate: f64,
    pub pronoun_multiplier: f64,
    pub hashtag_rate_positive: f64,
    pub hashtag_rate_control: f64,
    /// Per-token rate of cohort-specific topic words for positives.
    pub topic_rate: f64,
    pub filler_vocabulary: usize,
    /// Mean gap between consecutive documents, in hours.
    pub mean_gap_hours_positive: f64,
    pub mean_gap_hours_control: f64,
    /// Prepended to every user id, so several corpora can be concatenated.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            positive_label: "positive".into(),
            control_label: "control".into(),
            positive_users: 250,
            control_users: 250,
            docs_per_user: 200,
            tokens_per_doc: 20,
            platform: SynthPlatform::Mixed,
            pronoun_rate: 0.03,
            pronoun_multiplier: 2.0,
            hashtag_rate_positive: 0.01,
            hashtag_rate_control: 0.02,
            topic_rate: 0.03,
            filler_vocabulary: 4000,
            mean_gap_hours_positive: 30.0,
            mean_gap_hours_control: 40.0,
            id_prefix: String::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.positive_label == self.control_label {
            return Err("positive and control labels must differ".into());
        }
        if self.tokens_per_doc < 2 {
            return Err("tokens_per_doc must be at least 2".into());
        }
        if self.filler_vocabulary == 0 {
            return Err("filler_vocabulary must be positive".into());
        }
        let n = self.tokens_per_doc as f64;
        let slot = |rate: f64| rate * n / (n - 1.0);
        for (name, rate) in [
            ("hashtag_rate_positive", self.hashtag_rate_positive),
            ("hashtag_rate_control", self.hashtag_rate_control),
            ("pronoun_rate", self.pronoun_rate),
            ("topic_rate", self.topic_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(format!("{name} must be in [0, 1)"));
            }
        }
        let worst = slot(self.hashtag_rate_positive.max(self.hashtag_rate_control))
            + slot(self.pronoun_rate * self.pronoun_multiplier)
            + slot(self.topic_rate);
        if worst >= 1.0 {
            return Err("token rates leave no room for filler words".into());
        }
        if !(self.mean_gap_hours_positive > 0.0 && self.mean_gap_hours_control > 0.0) {
            return Err("mean gaps must be positive".into());
        }
        Ok(())
    }
}

/// Pronounceable filler words that match no entry of the bundled lexicons.
pub fn filler_words(n: usize) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
    const VOWELS: &[u8] = b"aeiou";
    let lexicons: Vec<CategoryLexicon> = [
        "builtin:demo-liwc",
        "builtin:depression",
        "builtin:absolutist",
    ]
    .iter()
    .map(|p| CategoryLexicon::load(p).expect("bundled lexicon"))
    .collect();
    let emotions = EmotionLexicon::load("builtin:demo-emotions").expect("bundled lexicon");
    let syllables: Vec<String> = CONSONANTS
        .iter()
        .flat_map(|c| {
            VOWELS
                .iter()
                .map(move |v| format!("{}{}", *c as char, *v as char))
        })
        .collect();
    let s = syllables.len();
    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    while out.len() < n {
        let word = format!(
            "{}{}{}",
            syllables[k % s],
            syllables[(k / s) % s],
            syllables[(k / (s * s)) % s]
        );
        k += 1;
        let taken = lexicons.iter().any(|l| {
            l.categories()
                .iter()
                .any(|c| c.entries.iter().any(|e| e.matches(&word)))
        }) || !emotions.emotions_of(&word).is_empty();
        if !taken {
            out.push(word);
        }
        assert!(k < s * s * s, "filler space exhausted");
    }
    out
}

fn topic_words(prefix: &str) -> Vec<String> {
    (0..40)
        .map(|i| format!("{prefix}{}", ["x", "q", "j", "w"][i % 4].repeat(1 + i / 4)))
        .collect()
}

struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    fn zipf(n: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|r| {
                acc += 1.0 / r as f64;
                acc
            })
            .collect::<Vec<_>>();
        let total = acc;
        Self {
            cumulative: cumulative.into_iter().map(|c| c / total).collect(),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .partition_point(|c| *c < u)
            .min(self.cumulative.len() - 1)
    }
}

fn exponential(rng: &mut impl Rng, mean: f64) -> f64 {
    let u: f64 = rng.gen();
    -mean * (1.0 - u).ln()
}

/// Writes `text` for one document into `buf`.
struct DocWriter<'a> {
    cfg: &'a SynthConfig,
    fillers: &'a [String],
    zipf: &'a Sampler,
    topics: &'a [String],
}

impl DocWriter<'_> {
    fn write(
        &self,
        rng: &mut ChaCha8Rng,
        positive: bool,
        joy_propensity: f64,
        twitter: bool,
        buf: &mut String,
    ) {
        let n = self.cfg.tokens_per_doc;
        let scale = n as f64 / (n as f64 - 1.0);
        let hashtag = scale
            * if positive {
                self.cfg.hashtag_rate_positive
            } else {
                self.cfg.hashtag_rate_control
            };
        let pronoun = scale
            * self.cfg.pronoun_rate
            * if positive {
                self.cfg.pronoun_multiplier
            } else {
                1.0
            };
        let topic = if positive {
            scale * self.cfg.topic_rate
        } else {
            0.0
        };
        let emotion_slot = rng.gen_range(0..n);
        buf.clear();
        for slot in 0..n {
            if slot > 0 {
                buf.push(' ');
            }
            if slot == emotion_slot {
                let words: &[&str] = if rng.gen_bool(joy_propensity) {
                    &JOY_WORDS
                } else {
                    &SADNESS_WORDS
                };
                buf.push_str(words[rng.gen_range(0..words.len())]);
                continue;
            }
            let u: f64 = rng.gen();
            if u < hashtag {
                buf.push('#');
                buf.push_str(&self.fillers[self.zipf.sample(rng)]);
            } else if u < hashtag + pronoun {
                buf.push_str(PRONOUNS[rng.gen_range(0..PRONOUNS.len())]);
            } else if u < hashtag + pronoun + topic {
                buf.push_str(&self.topics[rng.gen_range(0..self.topics.len())]);
            } else {
                let word = &self.fillers[self.zipf.sample(rng)];
                let v: f64 = rng.gen();
                if v < 0.004 {
                    buf.push_str(&word.to_uppercase());
                } else if twitter && v < 0.014 {
                    buf.push('@');
                    buf.push_str(word);
                } else {
                    buf.push_str(word);
                }
            }
        }
    }
}

/// Builds the corpus. Identical configs give identical corpora.
pub fn generate(cfg: &SynthConfig) -> Result<Corpus, String> {
    cfg.validate()?;
    let fillers = filler_words(cfg.filler_vocabulary);
    let zipf = Sampler::zipf(fillers.len());
    let topics = topic_words("zo");
    let writer = DocWriter {
        cfg,
        fillers: &fillers,
        zipf: &zipf,
        topics: &topics,
    };
    let start = Utc
        .with_ymd_and_hms(2016, 1, 1, 0, 0, 0)
        .single()
        .expect("valid date");
    let end = Utc
        .with_ymd_and_hms(2018, 12, 31, 23, 59, 59)
        .single()
        .expect("valid date");
    let mut builder = CorpusBuilder::new();
    let mut text = String::new();
    let cohorts = [
        (cfg.positive_label.as_str(), cfg.positive_users, true, "p"),
        (cfg.control_label.as_str(), cfg.control_users, false, "c"),
    ];
    for (ci, (label, users, positive, tag)) in cohorts.into_iter().enumerate() {
        for u in 0..users {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((ci as u64) << 40) | u as u64);
            let user_id = format!("{}{tag}{u:06}", cfg.id_prefix);
            let platform = match cfg.platform {
                SynthPlatform::Reddit => Platform::Reddit,
                SynthPlatform::Twitter => Platform::Twitter,
                SynthPlatform::Mixed if u % 2 == 0 => Platform::Reddit,
                SynthPlatform::Mixed => Platform::Twitter,
            };
            let joy_propensity = rng.gen_range(0.1..0.9);
            let mean_gap = 3600.0
                * if positive {
                    cfg.mean_gap_hours_positive
                } else {
                    cfg.mean_gap_hours_control
                };
            let span = mean_gap * cfg.docs_per_user as f64;
            let room = ((end - start).num_seconds() as f64 - span).max(0.0);
            let mut t = start.timestamp() as f64 + rng.gen::<f64>() * room;
            for d in 0..cfg.docs_per_user {
                if d > 0 {
                    t += exponential(&mut rng, mean_gap).max(1.0);
                }
                let ts = (t as i64).min(end.timestamp());
                writer.write(
                    &mut rng,
                    positive,
                    joy_propensity,
                    platform == Platform::Twitter,
                    &mut text,
                );
                let submission_type = (platform == Platform::Reddit).then(|| {
                    if rng.gen_bool(0.2) {
                        SubmissionType::Post
                    } else {
                        SubmissionType::Comment
                    }
                });
                let doc = Document {
                    doc_id: format!("{user_id}-{d:05}"),
                    user_id: user_id.clone(),
                    timestamp: DateTime::from_timestamp(ts, 0).expect("in range"),
                    text: text.clone(),
                    platform,
                    submission_type,
                };
                builder
                    .push(label, doc)
                    .map_err(|e: CorpusError| e.to_string())?;
            }
        }
    }
    builder.build().map_err(|e| e.to_string())
}
