//! Open-vocabulary comparison: vocabulary overlap, Jelinek-Mercer smoothed
//! unigram language models, and KL divergence between them.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, UserProfile};
use crate::textscan::Scanner;

pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("lambda must lie strictly between 0 and 1, got {0}")]
    InvalidLambda(f64),
    #[error("collection has no word occurrences")]
    EmptyCollection,
    #[error("class {0:?} has no word occurrences")]
    EmptyTarget(String),
    #[error("word {word:?} of class {class:?} is not in the collection")]
    OutsideSupport { class: String, word: String },
    #[error("language models are defined over different supports")]
    SupportMismatch,
    #[error("sample fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LogBase {
    #[default]
    #[serde(rename = "e")]
    E,
    #[serde(rename = "2")]
    Two,
}

impl LogBase {
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::E => nats,
            LogBase::Two => nats / std::f64::consts::LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogBase::E => "e",
            LogBase::Two => "2",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e" | "E" | "nats" => Ok(LogBase::E),
            "2" | "bits" => Ok(LogBase::Two),
            other => Err(format!("unsupported log base {other:?} (use 2 or e)")),
        }
    }
}

/// Word multiset of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub class_label: String,
    counts: HashMap<String, u64>,
    total_tokens: u64,
}

impl Vocabulary {
    pub fn from_counts(class_label: impl Into<String>, counts: HashMap<String, u64>) -> Self {
        let mut counts = counts;
        counts.retain(|_, c| *c > 0);
        let total_tokens = counts.values().sum();
        Self {
            class_label: class_label.into(),
            counts,
            total_tokens,
        }
    }

    pub fn from_users(class_label: &str, users: &[UserProfile], scanner: &Scanner) -> Self {
        let counts = users
            .par_iter()
            .map(|u| user_term_counts(u, scanner))
            .reduce(HashMap::new, merge_counts);
        Self::from_counts(class_label, counts)
    }

    pub fn from_texts<'a>(
        class_label: &str,
        texts: impl IntoIterator<Item = &'a str>,
        scanner: &Scanner,
    ) -> Self {
        let mut counts = HashMap::new();
        for text in texts {
            add_text(&mut counts, text, scanner);
        }
        Self::from_counts(class_label, counts)
    }

    pub fn counts(&self) -> &HashMap<String, u64> {
        &self.counts
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }
}

fn add_text(counts: &mut HashMap<String, u64>, text: &str, scanner: &Scanner) {
    for tok in scanner.tokenize(text).tokens() {
        if let Some(word) = tok.normalized() {
            *counts.entry(word).or_insert(0) += 1;
        }
    }
}

pub fn user_term_counts(user: &UserProfile, scanner: &Scanner) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for doc in user.documents() {
        add_text(&mut counts, &doc.text, scanner);
    }
    counts
}

pub fn merge_counts(mut a: HashMap<String, u64>, b: HashMap<String, u64>) -> HashMap<String, u64> {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (w, c) in b {
        *a.entry(w).or_insert(0) += c;
    }
    a
}

pub fn build_vocabulary(
    corpus: &Corpus,
    class_label: &str,
    scanner: &Scanner,
) -> Result<Vocabulary, VocabError> {
    let users = corpus.cohort(class_label)?;
    Ok(Vocabulary::from_users(class_label, users, scanner))
}

/// Set overlap between two vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JaccardResult {
    /// `None` when both vocabularies are empty.
    pub index: Option<f64>,
    pub intersection: usize,
    pub union: usize,
    /// |P \ C|
    pub only_first: usize,
    /// |C \ P|
    pub only_second: usize,
}

pub fn jaccard(p: &Vocabulary, c: &Vocabulary) -> JaccardResult {
    let (small, large) = if p.len() <= c.len() { (p, c) } else { (c, p) };
    let intersection = small.words().filter(|w| large.contains(w)).count();
    let union = p.len() + c.len() - intersection;
    JaccardResult {
        index: (union > 0).then(|| intersection as f64 / union as f64),
        intersection,
        union,
        only_first: p.len() - intersection,
        only_second: c.len() - intersection,
    }
}

/// The collection S: union multiset of the classes being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub class_labels: Vec<String>,
    words: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    total: u64,
}

impl Collection {
    pub fn union(vocabularies: &[&Vocabulary]) -> Result<Self, VocabError> {
        let mut merged: HashMap<&str, u64> = HashMap::new();
        for v in vocabularies {
            for (w, c) in &v.counts {
                *merged.entry(w.as_str()).or_insert(0) += c;
            }
        }
        if merged.is_empty() {
            return Err(VocabError::EmptyCollection);
        }
        let mut entries: Vec<(&str, u64)> = merged.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let words: Vec<String> = entries.iter().map(|(w, _)| w.to_string()).collect();
        let counts: Vec<u64> = entries.iter().map(|(_, c)| *c).collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Self {
            class_labels: vocabularies.iter().map(|v| v.class_label.clone()).collect(),
            total: counts.iter().sum(),
            words,
            index,
            counts,
        })
    }

    /// Sorted support words.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// s_w / |S|
    pub fn probability_at(&self, idx: usize) -> f64 {
        self.counts[idx] as f64 / self.total as f64
    }
}

/// Smoothed unigram model over a collection's support.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub class_label: String,
    pub lambda: f64,
    collection: Arc<Collection>,
    probs: Vec<f64>,
}

impl LanguageModel {
    pub fn collection(&self) -> &Arc<Collection> {
        &self.collection
    }

    pub fn support(&self) -> &[String] {
        self.collection.words()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, word: &str) -> Option<f64> {
        self.collection.position(word).map(|i| self.probs[i])
    }

    pub fn total_probability(&self) -> f64 {
        // pairwise-ish: sort-free Neumaier sum keeps 1e-9 easily
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &p in &self.probs {
            let t = sum + p;
            if sum.abs() >= p.abs() {
                comp += (sum - t) + p;
            } else {
                comp += (p - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    pub fn same_support(&self, other: &LanguageModel) -> bool {
        Arc::ptr_eq(&self.collection, &other.collection)
            || self.collection.words == other.collection.words
    }

    /// Probabilities sorted in descending order.
    pub fn rank_curve(&self) -> Vec<f64> {
        let mut curve = self.probs.clone();
        curve.sort_by(|a, b| b.total_cmp(a));
        curve
    }

    /// (word, probability) pairs in support order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.collection
            .words
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }
}

fn check_lambda(lambda: f64) -> Result<(), VocabError> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(VocabError::InvalidLambda(lambda))
    }
}

fn smoothed(
    class_label: &str,
    counts: &[(usize, u64)],
    doc_total: u64,
    collection: &Arc<Collection>,
    lambda: f64,
) -> LanguageModel {
    let mut probs: Vec<f64> = (0..collection.len())
        .map(|i| lambda * collection.probability_at(i))
        .collect();
    let ml_weight = (1.0 - lambda) / doc_total as f64;
    for &(idx, c) in counts {
        probs[idx] += ml_weight * c as f64;
    }
    LanguageModel {
        class_label: class_label.to_string(),
        lambda,
        collection: Arc::clone(collection),
        probs,
    }
}

/// P(w) = (1 - λ)·count_D(w)/|D| + λ·count_S(w)/|S| for every w in S.
pub fn build_language_model(
    target: &Vocabulary,
    collection: &Arc<Collection>,
    lambda: f64,
) -> Result<LanguageModel, VocabError> {
    check_lambda(lambda)?;
    if collection.total == 0 {
        return Err(VocabError::EmptyCollection);
    }
    if target.total_tokens == 0 {
        return Err(VocabError::EmptyTarget(target.class_label.clone()));
    }
    let counts = target
        .counts
        .iter()
        .map(|(w, c)| {
            collection
                .position(w)
                .map(|idx| (idx, *c))
                .ok_or_else(|| VocabError::OutsideSupport {
                    class: target.class_label.clone(),
                    word: w.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(smoothed(
        &target.class_label,
        &counts,
        target.total_tokens,
        collection,
        lambda,
    ))
}

/// Like [`build_language_model`] but drops words outside the support; the
/// maximum-likelihood term is taken over the in-support tokens only.
/// Returns `None` when no token falls inside the support.
pub fn build_restricted_model(
    class_label: &str,
    counts: &HashMap<String, u64>,
    collection: &Arc<Collection>,
    lambda: f64,
) -> Result<Option<LanguageModel>, VocabError> {
    check_lambda(lambda)?;
    let kept: Vec<(usize, u64)> = counts
        .iter()
        .filter_map(|(w, c)| collection.position(w).map(|i| (i, *c)))
        .filter(|(_, c)| *c > 0)
        .collect();
    let total: u64 = kept.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(smoothed(
        class_label,
        &kept,
        total,
        collection,
        lambda,
    )))
}

/// Models for several classes sharing the union of all of them as S.
pub fn build_models(
    vocabularies: &[&Vocabulary],
    lambda: f64,
) -> Result<Vec<LanguageModel>, VocabError> {
    let collection = Arc::new(Collection::union(vocabularies)?);
    vocabularies
        .iter()
        .map(|v| build_language_model(v, &collection, lambda))
        .collect()
}

/// KL(P‖C) = Σ P(x)·log(P(x)/C(x)), in the requested base.
pub fn kl_divergence(
    p: &LanguageModel,
    c: &LanguageModel,
    base: LogBase,
) -> Result<f64, VocabError> {
    if !p.same_support(c) {
        return Err(VocabError::SupportMismatch);
    }
    let nats: f64 = p
        .probs
        .iter()
        .zip(&c.probs)
        .filter(|(pp, _)| **pp > 0.0)
        .map(|(pp, cc)| pp * (pp / cc).ln())
        .sum();
    Ok(base.from_nats(nats.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nearest {
    Positive,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScore {
    pub kl_to_positive: f64,
    pub kl_to_control: f64,
    /// Ties go to control.
    pub nearest: Nearest,
}

/// Compares one user's smoothed model against the positive and control
/// reference models. `None` when the user has no in-support word tokens.
pub fn reference_lm_score(
    user: &UserProfile,
    ref_positive: &LanguageModel,
    ref_control: &LanguageModel,
    lambda: f64,
    scanner: &Scanner,
    base: LogBase,
) -> Result<Option<ReferenceScore>, VocabError> {
    if !ref_positive.same_support(ref_control) {
        return Err(VocabError::SupportMismatch);
    }
    let counts = user_term_counts(user, scanner);
    reference_score_from_counts(
        user.user_id(),
        &counts,
        ref_positive,
        ref_control,
        lambda,
        base,
    )
}

/// [`reference_lm_score`] from a user's precomputed term counts.
pub fn reference_score_from_counts(
    user_id: &str,
    counts: &HashMap<String, u64>,
    ref_positive: &LanguageModel,
    ref_control: &LanguageModel,
    lambda: f64,
    base: LogBase,
) -> Result<Option<ReferenceScore>, VocabError> {
    if !ref_positive.same_support(ref_control) {
        return Err(VocabError::SupportMismatch);
    }
    let Some(model) = build_restricted_model(user_id, counts, ref_positive.collection(), lambda)?
    else {
        return Ok(None);
    };
    let kl_to_positive = kl_divergence(&model, ref_positive, base)?;
    let kl_to_control = kl_divergence(&model, ref_control, base)?;
    Ok(Some(ReferenceScore {
        kl_to_positive,
        kl_to_control,
        nearest: if kl_to_positive < kl_to_control {
            Nearest::Positive
        } else {
            Nearest::Control
        },
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReference {
    pub user_id: String,
    pub class_label: String,
    pub score: Option<ReferenceScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSampleSummary {
    pub class_label: String,
    pub sampled: usize,
    pub scored: usize,
    pub mean_kl_to_positive: Option<f64>,
    pub mean_kl_to_control: Option<f64>,
    pub nearest_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExperiment {
    pub fraction: f64,
    pub seed: u64,
    pub summaries: Vec<ReferenceSampleSummary>,
    pub users: Vec<UserReference>,
}

/// Seeded sample of `ceil(fraction * n)` users (at least one), sorted by id.
pub fn sample_users(users: &[UserProfile], fraction: f64, seed: u64) -> Vec<&UserProfile> {
    if users.is_empty() {
        return Vec::new();
    }
    let k = ((users.len() as f64 * fraction).ceil() as usize).clamp(1, users.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<&UserProfile> = users.choose_multiple(&mut rng, k).collect();
    picked.sort_by(|a, b| a.user_id().cmp(b.user_id()));
    picked
}

/// Scores a seeded sample of each class against the two reference models
/// and averages the divergences per class.
#[allow(clippy::too_many_arguments)]
pub fn reference_experiment(
    corpus: &Corpus,
    ref_positive: &LanguageModel,
    ref_control: &LanguageModel,
    lambda: f64,
    fraction: f64,
    seed: u64,
    scanner: &Scanner,
    base: LogBase,
) -> Result<ReferenceExperiment, VocabError> {
    reference_experiment_with(
        corpus,
        ref_positive,
        ref_control,
        lambda,
        fraction,
        seed,
        base,
        &|u: &UserProfile| user_term_counts(u, scanner),
    )
}

/// [`reference_experiment`] with a caller-supplied source of per-user term
/// counts.
#[allow(clippy::too_many_arguments)]
pub fn reference_experiment_with(
    corpus: &Corpus,
    ref_positive: &LanguageModel,
    ref_control: &LanguageModel,
    lambda: f64,
    fraction: f64,
    seed: u64,
    base: LogBase,
    counts_of: &(dyn Fn(&UserProfile) -> HashMap<String, u64> + Sync),
) -> Result<ReferenceExperiment, VocabError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(VocabError::InvalidFraction(fraction));
    }
    let mut summaries = Vec::new();
    let mut users_out = Vec::new();
    for (offset, label) in [&ref_positive.class_label, &ref_control.class_label]
        .into_iter()
        .enumerate()
    {
        let users = corpus.cohort(label)?;
        let sample = sample_users(users, fraction, seed.wrapping_add(offset as u64));
        let scores = sample
            .par_iter()
            .map(|u| {
                reference_score_from_counts(
                    u.user_id(),
                    &counts_of(u),
                    ref_positive,
                    ref_control,
                    lambda,
                    base,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scored: Vec<&ReferenceScore> = scores.iter().flatten().collect();
        let n = scored.len();
        let avg = |f: fn(&ReferenceScore) -> f64| {
            (n > 0).then(|| scored.iter().map(|s| f(s)).sum::<f64>() / n as f64)
        };
        summaries.push(ReferenceSampleSummary {
            class_label: label.clone(),
            sampled: sample.len(),
            scored: n,
            mean_kl_to_positive: avg(|s| s.kl_to_positive),
            mean_kl_to_control: avg(|s| s.kl_to_control),
            nearest_positive: scored
                .iter()
                .filter(|s| s.nearest == Nearest::Positive)
                .count(),
        });
        users_out.extend(sample.iter().zip(scores).map(|(u, score)| UserReference {
            user_id: u.user_id().to_string(),
            class_label: label.clone(),
            score,
        }));
    }
    Ok(ReferenceExperiment {
        fraction,
        seed,
        summaries,
        users: users_out,
    })
}

/// Seeded split of a cohort into two halves (sizes differ by at most one).
pub fn split_cohort(users: &[UserProfile], seed: u64) -> (Vec<&UserProfile>, Vec<&UserProfile>) {
    split_halves(users, seed)
}

/// The permutation depends only on `items.len()` and `seed`.
pub fn split_halves<T>(items: &[T], seed: u64) -> (Vec<&T>, Vec<&T>) {
    let mut shuffled: Vec<&T> = items.iter().collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let second = shuffled.split_off(shuffled.len().div_ceil(2));
    (shuffled, second)
}

/// One column of the vocabulary comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabComparison {
    pub positive: String,
    pub control: String,
    pub unique_positive: usize,
    pub unique_control: usize,
    pub jaccard: JaccardResult,
    pub kl_positive_control: f64,
    pub kl_control_positive: f64,
    /// Divergence between two random halves of the control cohort.
    pub kl_control_control: Option<f64>,
    pub lambda: f64,
    pub log_base: LogBase,
}

pub struct PairAnalysis {
    pub comparison: VocabComparison,
    pub positive_model: LanguageModel,
    pub control_model: LanguageModel,
}

#[allow(clippy::too_many_arguments)]
pub fn compare_pair(
    corpus: &Corpus,
    positive: &Vocabulary,
    control: &Vocabulary,
    lambda: f64,
    base: LogBase,
    seed: u64,
    scanner: &Scanner,
) -> Result<PairAnalysis, VocabError> {
    let control_users = corpus.cohort(&control.class_label)?;
    let counts: Vec<HashMap<String, u64>> = control_users
        .par_iter()
        .map(|u| user_term_counts(u, scanner))
        .collect();
    let refs: Vec<&HashMap<String, u64>> = counts.iter().collect();
    compare_pair_with_counts(positive, control, &refs, lambda, base, seed)
}

/// Same as [`compare_pair`], given the term counts of every control user in
/// cohort order.
pub fn compare_pair_with_counts(
    positive: &Vocabulary,
    control: &Vocabulary,
    control_counts: &[&HashMap<String, u64>],
    lambda: f64,
    base: LogBase,
    seed: u64,
) -> Result<PairAnalysis, VocabError> {
    let models = build_models(&[positive, control], lambda)?;
    let [positive_model, control_model]: [LanguageModel; 2] =
        models.try_into().expect("two models for two vocabularies");
    let kl_positive_control = kl_divergence(&positive_model, &control_model, base)?;
    let kl_control_positive = kl_divergence(&control_model, &positive_model, base)?;

    let kl_control_control = if control_counts.len() >= 2 {
        let (a, b) = split_halves(control_counts, seed);
        let own = |half: Vec<&&HashMap<String, u64>>, label: &str| {
            let mut counts = HashMap::new();
            for c in half {
                for (w, n) in c.iter() {
                    *counts.entry(w.clone()).or_insert(0) += n;
                }
            }
            Vocabulary::from_counts(label, counts)
        };
        let va = own(a, "control_a");
        let vb = own(b, "control_b");
        if va.total_tokens() > 0 && vb.total_tokens() > 0 {
            let halves = build_models(&[&va, &vb], lambda)?;
            Some(kl_divergence(&halves[0], &halves[1], base)?)
        } else {
            None
        }
    } else {
        None
    };

    Ok(PairAnalysis {
        comparison: VocabComparison {
            positive: positive.class_label.clone(),
            control: control.class_label.clone(),
            unique_positive: positive.len(),
            unique_control: control.len(),
            jaccard: jaccard(positive, control),
            kl_positive_control,
            kl_control_positive,
            kl_control_control,
            lambda,
            log_base: base,
        },
        positive_model,
        control_model,
    })
}
