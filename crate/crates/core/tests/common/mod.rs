#![allow(dead_code)]

pub mod charts;
pub mod checks;
pub mod oracle;

use std::collections::HashMap;
use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use psycholex::corpus::{Document, Platform, UserProfile};
use psycholex::report::{AnalysisReport, SectionBody, Table};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-3)
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn random_tokens(
    rng: &mut ChaCha8Rng,
    vocab: usize,
    len: std::ops::Range<usize>,
) -> Vec<String> {
    let len = rng.gen_range(len);
    (0..len)
        .map(|_| format!("w{}", rng.gen_range(0..vocab)))
        .collect()
}

pub fn counts(tokens: &[String]) -> HashMap<String, u64> {
    let mut out = HashMap::new();
    for t in tokens {
        *out.entry(t.clone()).or_insert(0) += 1;
    }
    out
}

pub fn doc(user: &str, id: &str, secs: i64, text: &str) -> Document {
    Document {
        doc_id: id.to_string(),
        user_id: user.to_string(),
        timestamp: Utc.timestamp_opt(secs, 0).unwrap(),
        text: text.to_string(),
        platform: Platform::Reddit,
        submission_type: None,
    }
}

pub fn user(id: &str, class: &str, docs: Vec<Document>) -> UserProfile {
    UserProfile::new(id, class, docs).expect("valid user")
}

pub fn table<'a>(report: &'a AnalysisReport, name: &str) -> Result<&'a Table, String> {
    match report.section(name).map(|s| &s.body) {
        Some(SectionBody::Table(t)) => Ok(t),
        _ => Err(format!("table {name} missing")),
    }
}

pub fn column(t: &Table, name: &str) -> Result<usize, String> {
    t.columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| format!("column {name} missing"))
}

pub fn parse_num(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

/// Peak resident set size of this process in bytes, from /proc.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
