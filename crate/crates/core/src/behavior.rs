//! Engagement-marker profiles and posting time-gap statistics.

use std::collections::BTreeMap;

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, Document, Platform, UserProfile};
use crate::textscan::{Marker, MarkerProfile, Scanner};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerShare {
    pub marker: Marker,
    /// Fraction of the user's documents with at least one occurrence.
    pub fraction: f64,
    /// False for platform-specific markers on other platforms; the fraction
    /// is then fixed at 0.
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserBehaviorProfile {
    pub user_id: String,
    pub class_label: String,
    pub documents: usize,
    pub markers: Vec<MarkerShare>,
    pub mean_hashtag_ratio: f64,
    pub mean_mention_ratio: f64,
    /// Seconds; `None` for users with fewer than two documents.
    pub mean_time_gap: Option<f64>,
}

impl UserBehaviorProfile {
    pub fn fraction(&self, marker: Marker) -> f64 {
        self.markers[marker.index()].fraction
    }

    pub fn applicable(&self, marker: Marker) -> bool {
        self.markers[marker.index()].applicable
    }
}

/// Mean of the consecutive differences t_i − t_{i−1}, i = 2..n, in seconds.
pub fn mean_time_gap(user: &UserProfile) -> Option<f64> {
    let docs = user.documents();
    if docs.len() < 2 {
        return None;
    }
    let total: i64 = docs
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).num_seconds())
        .sum();
    Some(total as f64 / (docs.len() - 1) as f64)
}

/// Accumulates per-document marker profiles for one user.
#[derive(Debug, Clone, Default)]
pub struct MarkerTally {
    hits: [usize; Marker::ALL.len()],
    present: [bool; 3],
    hashtag_ratio: f64,
    mention_ratio: f64,
    documents: usize,
}

impl MarkerTally {
    pub fn add(&mut self, doc: &Document, m: &MarkerProfile) {
        for marker in Marker::ALL {
            if m.has(marker) {
                self.hits[marker.index()] += 1;
            }
        }
        self.hashtag_ratio += m.hashtag_ratio;
        self.mention_ratio += m.mention_ratio;
        self.present[doc.platform as usize] = true;
        self.documents += 1;
    }

    pub fn finish(self, user: &UserProfile) -> UserBehaviorProfile {
        let n = self.documents;
        let per_doc = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        let markers = Marker::ALL
            .iter()
            .map(|&marker| {
                let applicable = marker
                    .platform()
                    .is_none_or(|p: Platform| self.present[p as usize]);
                MarkerShare {
                    marker,
                    fraction: if applicable {
                        per_doc(self.hits[marker.index()] as f64)
                    } else {
                        0.0
                    },
                    applicable,
                }
            })
            .collect();
        UserBehaviorProfile {
            user_id: user.user_id().to_string(),
            class_label: user.class_label().to_string(),
            documents: n,
            markers,
            mean_hashtag_ratio: per_doc(self.hashtag_ratio),
            mean_mention_ratio: per_doc(self.mention_ratio),
            mean_time_gap: mean_time_gap(user),
        }
    }
}

pub fn behavior_profile(user: &UserProfile, scanner: &Scanner) -> UserBehaviorProfile {
    let mut tally = MarkerTally::default();
    for doc in user.documents() {
        tally.add(doc, &scanner.scan_markers(doc));
    }
    tally.finish(user)
}

pub fn behavior_profiles_for(users: &[UserProfile], scanner: &Scanner) -> Vec<UserBehaviorProfile> {
    users
        .par_iter()
        .filter(|u| {
            let keep = !u.documents().is_empty();
            if !keep {
                log::warn!(
                    "behavior: user {} has no documents and is excluded",
                    u.user_id()
                );
            }
            keep
        })
        .map(|u| behavior_profile(u, scanner))
        .collect()
}

pub fn behavior_profiles(
    corpus: &Corpus,
    class_label: &str,
    scanner: &Scanner,
) -> Result<Vec<UserBehaviorProfile>, CorpusError> {
    Ok(behavior_profiles_for(corpus.cohort(class_label)?, scanner))
}

/// Running count / mean / sum of squared deviations, mergeable in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    /// Population standard deviation (divides by N).
    pub fn population_std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    /// Seconds.
    pub mean: f64,
    /// Population standard deviation, seconds.
    pub std: f64,
    pub count: u64,
}

impl GapCell {
    pub fn mean_hours(&self) -> f64 {
        self.mean / SECONDS_PER_HOUR
    }

    pub fn std_hours(&self) -> f64 {
        self.std / SECONDS_PER_HOUR
    }
}

/// class → month-of-year (1–12) → gap statistics. Months without gaps are
/// absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonthlyGapTable {
    pub classes: BTreeMap<String, BTreeMap<u32, GapCell>>,
}

impl MonthlyGapTable {
    pub fn is_empty(&self) -> bool {
        self.classes.values().all(BTreeMap::is_empty)
    }

    pub fn cell(&self, class_label: &str, month: u32) -> Option<&GapCell> {
        self.classes.get(class_label)?.get(&month)
    }

    pub fn total_samples(&self, class_label: &str) -> u64 {
        self.classes
            .get(class_label)
            .map_or(0, |m| m.values().map(|c| c.count).sum())
    }
}

fn user_monthly_moments(user: &UserProfile) -> [Moments; 12] {
    let mut out = [Moments::default(); 12];
    for w in user.documents().windows(2) {
        let gap = (w[1].timestamp - w[0].timestamp).num_seconds() as f64;
        out[w[0].timestamp.month0() as usize].push(gap);
    }
    out
}

/// Gaps between consecutive documents, bucketed by the UTC month-of-year of
/// the earlier document and pooled per class.
pub fn monthly_gap_table_for<'a>(
    cohorts: impl IntoIterator<Item = (&'a str, &'a [UserProfile])>,
) -> MonthlyGapTable {
    let mut table = MonthlyGapTable::default();
    for (label, users) in cohorts {
        let pooled = users.par_iter().map(user_monthly_moments).reduce(
            || [Moments::default(); 12],
            |a, b| std::array::from_fn(|i| a[i].merge(b[i])),
        );
        let months = pooled
            .iter()
            .enumerate()
            .filter(|(_, m)| m.count > 0)
            .map(|(i, m)| {
                (
                    i as u32 + 1,
                    GapCell {
                        mean: m.mean,
                        std: m.population_std(),
                        count: m.count,
                    },
                )
            })
            .collect();
        table.classes.insert(label.to_string(), months);
    }
    table
}

pub fn monthly_gap_table(
    corpus: &Corpus,
    classes: &[String],
) -> Result<MonthlyGapTable, CorpusError> {
    let cohorts = classes
        .iter()
        .map(|c| corpus.cohort(c).map(|users| (c.as_str(), users)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(monthly_gap_table_for(cohorts))
}
