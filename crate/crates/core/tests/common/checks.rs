//! One function per acceptance criterion. Each returns a short summary on
//! success and the first discrepancy on failure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use psycholex::behavior::{behavior_profiles_for, mean_time_gap, monthly_gap_table_for};
use psycholex::lexicons::{
    category_profiles_for, emotion_stats_for, CategoryLexicon, EmotionLexicon,
};
use psycholex::openvocab::{
    build_language_model, jaccard, kl_divergence, reference_score_from_counts, Collection,
    LanguageModel, LogBase, Vocabulary,
};
use psycholex::pipeline::{self, Analysis, CohortPair, RunConfig, RunOutput};
use psycholex::stats::{correlation_matrix, pearson, welch_t_test, CorrelationMethod};
use psycholex::synth::{self, SynthConfig};
use psycholex::textscan::default_scanner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    close, column, counts, doc, ensure, oracle, parse_num, peak_rss_bytes, random_tokens, table,
    user, workspace_root, Check,
};

const REL: f64 = 1e-9;
const REL_P: f64 = 1e-6;
const FIXTURE_TOL: f64 = 1e-6;

fn models(p: &[String], c: &[String], lambda: f64) -> (LanguageModel, LanguageModel) {
    let vp = Vocabulary::from_counts("p", counts(p));
    let vc = Vocabulary::from_counts("c", counts(c));
    let coll = Arc::new(Collection::union(&[&vp, &vc]).unwrap());
    (
        build_language_model(&vp, &coll, lambda).unwrap(),
        build_language_model(&vc, &coll, lambda).unwrap(),
    )
}

fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let loc = rng.gen_range(-5.0..5.0);
    let scale = rng.gen_range(0.1..4.0);
    (0..n)
        .map(|_| loc + scale * rng.gen_range(-1.0..1.0))
        .collect()
}

/// Criterion 1: every formula against its brute-force oracle.
pub fn formula_oracles(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p_checked = 0;
    for case in 0..cases {
        let vocab = rng.gen_range(2..15);
        let p = random_tokens(&mut rng, vocab, 1..40);
        let c = random_tokens(&mut rng, vocab + 3, 1..40);

        let got = jaccard(
            &Vocabulary::from_counts("p", counts(&p)),
            &Vocabulary::from_counts("c", counts(&c)),
        )
        .index;
        let want = oracle::jaccard(&p, &c);
        ensure(got.zip(want).is_some_and(|(g, w)| close(g, w, REL)), || {
            format!("jaccard case {case}: {got:?} vs {want:?}")
        })?;

        let lambda = rng.gen_range(0.01..0.99);
        let (mp, mc) = models(&p, &c, lambda);
        let s: Vec<String> = p.iter().chain(&c).cloned().collect();
        let op = oracle::language_model(&p, &s, lambda);
        let oc = oracle::language_model(&c, &s, lambda);
        ensure(mp.support().len() == op.len(), || {
            format!("lm case {case}: support size")
        })?;
        for (w, want) in &op {
            let got = mp.prob(w).unwrap_or(f64::NAN);
            ensure(close(got, *want, REL), || {
                format!("lm case {case}: P({w}) {got} vs {want}")
            })?;
        }

        for (base, lb) in [(std::f64::consts::E, LogBase::E), (2.0, LogBase::Two)] {
            let got = kl_divergence(&mp, &mc, lb).unwrap();
            let want = oracle::kl(&op, &oc, base);
            ensure(close(got, want, REL), || {
                format!("kl case {case}: {got} vs {want}")
            })?;
        }

        let gaps = rng.gen_range(2..20);
        let ts: Vec<i64> = (0..gaps)
            .map(|_| 1_500_000_000 + rng.gen_range(0..50_000_000))
            .collect();
        let docs = ts
            .iter()
            .enumerate()
            .map(|(i, t)| doc("u", &format!("d{i}"), *t, "x"))
            .collect();
        let got = mean_time_gap(&user("u", "c", docs));
        let want = oracle::mean_gap(&ts);
        ensure(got.zip(want).is_some_and(|(g, w)| close(g, w, REL)), || {
            format!("time gap case {case}: {got:?} vs {want:?}")
        })?;

        let n = rng.gen_range(3..30);
        let x = sample(&mut rng, n);
        let y: Vec<f64> = if case % 17 == 0 {
            vec![1.5; n]
        } else {
            x.iter()
                .map(|v| v * rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0))
                .collect()
        };
        let got = pearson(&x, &y).unwrap();
        let want = oracle::pearson(&x, &y);
        let same = match (got, want) {
            (Some(g), Some(w)) => close(g, w, REL),
            (None, None) => true,
            _ => false,
        };
        ensure(same, || format!("pearson case {case}: {got:?} vs {want:?}"))?;

        let (na, nb) = (rng.gen_range(2..25), rng.gen_range(2..25));
        let a = sample(&mut rng, na);
        let b = sample(&mut rng, nb);
        let got = welch_t_test(&a, &b).unwrap();
        let (t, df) = oracle::welch(&a, &b);
        ensure(close(got.t_statistic, t, REL), || {
            format!("welch case {case}: t {} vs {t}", got.t_statistic)
        })?;
        ensure(close(got.degrees_of_freedom, df, REL), || {
            format!("welch case {case}: df {} vs {df}", got.degrees_of_freedom)
        })?;
        let want_p = oracle::statrs_two_sided(t, df);
        ensure(close(got.p_value, want_p, REL_P), || {
            format!("welch case {case}: p {} vs {want_p}", got.p_value)
        })?;
        if df >= 1.0 && t.abs() < 40.0 {
            let quad = oracle::t_two_sided_quadrature(t, df);
            ensure((got.p_value - quad).abs() < REL_P, || {
                format!("welch case {case}: p {} vs quadrature {quad}", got.p_value)
            })?;
            p_checked += 1;
        }
    }
    Ok(format!(
        "{cases} cases x 6 formulas agree ({p_checked} p-values also checked by quadrature)"
    ))
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Criterion 2: the hand-computed fixtures.
pub fn hand_fixtures() -> Check {
    let d = Vocabulary::from_counts("d", counts(&words("a a b")));
    let rest = Vocabulary::from_counts("rest", counts(&words("b")));
    let coll = Arc::new(Collection::union(&[&d, &rest]).unwrap());
    let lm = build_language_model(&d, &coll, 0.5).unwrap();
    let pa = lm.prob("a").unwrap();
    let pb = lm.prob("b").unwrap();
    ensure(
        (pa - 7.0 / 12.0).abs() < FIXTURE_TOL && (pb - 5.0 / 12.0).abs() < FIXTURE_TOL,
        || format!("LM fixture: P(a)={pa} P(b)={pb}"),
    )?;

    // Counts chosen so that λ = 0.2 gives P = (0.75, 0.25) and C = (0.5, 0.5).
    let p: Vec<String> = [vec!["a"; 25], vec!["b"; 7]]
        .concat()
        .into_iter()
        .map(String::from)
        .collect();
    let c: Vec<String> = [vec!["a"; 15], vec!["b"; 17]]
        .concat()
        .into_iter()
        .map(String::from)
        .collect();
    let (mp, mc) = models(&p, &c, 0.2);
    ensure(
        (mp.prob("a").unwrap() - 0.75).abs() < 1e-12 && (mc.prob("a").unwrap() - 0.5).abs() < 1e-12,
        || "KL fixture models are not (0.75, 0.25) and (0.5, 0.5)".into(),
    )?;
    let kl = kl_divergence(&mp, &mc, LogBase::E).unwrap();
    ensure((kl - 0.130812).abs() < FIXTURE_TOL, || {
        format!("KL fixture: {kl}")
    })?;

    let w = welch_t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap();
    ensure(
        (w.t_statistic + 1.095445).abs() < FIXTURE_TOL
            && (w.degrees_of_freedom - 6.0).abs() < FIXTURE_TOL,
        || {
            format!(
                "Welch fixture: t={} df={}",
                w.t_statistic, w.degrees_of_freedom
            )
        },
    )?;

    let t0 = Utc
        .with_ymd_and_hms(2020, 1, 10, 12, 0, 0)
        .unwrap()
        .timestamp();
    let u = user(
        "u",
        "c",
        vec![
            doc("u", "a", t0, "x"),
            doc("u", "b", t0 + 100, "x"),
            doc("u", "c", t0 + 400, "x"),
        ],
    );
    let gap = mean_time_gap(&u).unwrap();
    ensure((gap - 200.0).abs() < FIXTURE_TOL, || {
        format!("time gap fixture: {gap}")
    })?;
    let users = [u];
    let table = monthly_gap_table_for([("c", &users[..])]);
    let jan = table.cell("c", 1).ok_or("no January cell")?;
    ensure(
        (jan.mean - 200.0).abs() < FIXTURE_TOL
            && (jan.std - 100.0).abs() < FIXTURE_TOL
            && jan.count == 2,
        || {
            format!(
                "January fixture: mean={} std={} n={}",
                jan.mean, jan.std, jan.count
            )
        },
    )?;
    Ok(format!(
        "P(a)={pa:.6} KL={kl:.6} t={:.6} df={:.1} gap={gap} jan={}/{}",
        w.t_statistic, w.degrees_of_freedom, jan.mean, jan.std
    ))
}

const WORD_POOL: &[&str] = &[
    "i", "me", "my", "we", "us", "she", "he", "happy", "glad", "sad", "cry", "lonely", "angry",
    "afraid", "trust", "mom", "friend", "always", "never", "think", "know", "eat", "was", "now",
    "zork", "blip", "plon", "#tag", "@someone", ":)", "WOW", "soooo", "f**k", "the", "the",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..12);
    (0..n)
        .map(|_| WORD_POOL[rng.gen_range(0..WORD_POOL.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_user(rng: &mut ChaCha8Rng, id: &str, class: &str) -> psycholex::corpus::UserProfile {
    let n = rng.gen_range(1..12);
    let docs = (0..n)
        .map(|d| {
            doc(
                id,
                &format!("{id}-{d}"),
                1_500_000_000 + d as i64 * 3600,
                &random_text(rng),
            )
        })
        .collect();
    user(id, class, docs)
}

fn duplicated(u: &psycholex::corpus::UserProfile) -> psycholex::corpus::UserProfile {
    let mut docs = u.documents().to_vec();
    for d in u.documents() {
        let mut copy = d.clone();
        copy.doc_id = format!("{}-dup", d.doc_id);
        docs.push(copy);
    }
    user(u.user_id(), u.class_label(), docs)
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Criterion 3: the invariant suites at the stated sizes.
pub fn property_suites(corpora: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas = [0.05, 0.1, 0.5, 0.9];
    let mut worst = 0.0_f64;
    for _ in 0..corpora {
        let vocab = rng.gen_range(1..60);
        let p = random_tokens(&mut rng, vocab, 1..120);
        let c = random_tokens(&mut rng, vocab + 5, 1..120);
        for lambda in lambdas {
            let (mp, mc) = models(&p, &c, lambda);
            for m in [&mp, &mc] {
                let total: f64 = m.probabilities().iter().sum();
                worst = worst.max((total - 1.0).abs());
            }
            let kl = kl_divergence(&mp, &mc, LogBase::E).unwrap();
            ensure(kl >= 0.0, || format!("negative KL {kl}"))?;
            let self_kl = kl_divergence(&mp, &mp, LogBase::E).unwrap();
            ensure(self_kl == 0.0, || format!("KL(P||P) = {self_kl}"))?;
            let differ = mp
                .probabilities()
                .iter()
                .zip(mc.probabilities())
                .any(|(a, b)| (a - b).abs() > 1e-9);
            ensure(!differ || kl > 0.0, || {
                "KL is zero for different models".into()
            })?;
            ensure(differ || kl < 1e-12, || {
                format!("KL {kl} for identical models")
            })?;
        }
        let vp = Vocabulary::from_counts("p", counts(&p));
        let vc = Vocabulary::from_counts("c", counts(&c));
        let (j1, j2) = (jaccard(&vp, &vc), jaccard(&vc, &vp));
        ensure(j1.index == j2.index, || "jaccard not symmetric".into())?;
        ensure(j1.intersection + j1.union == vp.len() + vc.len(), || {
            "|P∩C| + |P∪C| != |P| + |C|".into()
        })?;
        ensure(
            j1.only_first == j2.only_second && j1.only_first + j1.intersection == vp.len(),
            || "difference sizes inconsistent".into(),
        )?;
    }
    ensure(worst < 1e-9, || format!("LM mass off by {worst}"))?;

    let scanner = default_scanner();
    let lex = CategoryLexicon::load("builtin:demo-liwc").unwrap();
    let emo = EmotionLexicon::load("builtin:demo-emotions").unwrap();
    let users: Vec<_> = (0..200)
        .map(|i| random_user(&mut rng, &format!("u{i}"), "c"))
        .collect();
    for prof in category_profiles_for(&users, &lex, scanner) {
        ensure(prof.proportions.values().all(|x| in_unit(*x)), || {
            "category proportion outside [0,1]".into()
        })?;
    }
    for s in emotion_stats_for(&users, &emo, scanner) {
        ensure(s.fractions.iter().all(|x| in_unit(*x)), || {
            "emotion fraction outside [0,1]".into()
        })?;
    }
    for b in behavior_profiles_for(&users, scanner) {
        ensure(b.markers.iter().all(|m| in_unit(m.fraction)), || {
            "marker fraction outside [0,1]".into()
        })?;
        ensure(
            in_unit(b.mean_hashtag_ratio) && in_unit(b.mean_mention_ratio),
            || "token ratio outside [0,1]".into(),
        )?;
    }

    let doubled: Vec<_> = users.iter().map(duplicated).collect();
    let before = category_profiles_for(&users, &lex, scanner);
    let after = category_profiles_for(&doubled, &lex, scanner);
    for (a, b) in before.iter().zip(&after) {
        for (k, x) in &a.proportions {
            ensure((x - b.proportions[k]).abs() < 1e-12, || {
                format!("proportion of {k} changed under duplication")
            })?;
        }
    }
    let e_before = emotion_stats_for(&users, &emo, scanner);
    let e_after = emotion_stats_for(&doubled, &emo, scanner);
    for (a, b) in e_before.iter().zip(&e_after) {
        ensure(
            a.fractions
                .iter()
                .zip(&b.fractions)
                .all(|(x, y)| (x - y).abs() < 1e-12),
            || "emotion fraction changed under duplication".into(),
        )?;
    }

    let mut argmin_checked = 0;
    for _ in 0..200 {
        let p = random_tokens(&mut rng, 30, 5..200);
        let c = random_tokens(&mut rng, 30, 5..200);
        let (mp, mc) = models(&p, &c, 0.1);
        let mine = counts(&random_tokens(&mut rng, 30, 1..50));
        let twice: HashMap<String, u64> = mine.iter().map(|(k, v)| (k.clone(), v * 2)).collect();
        let a = reference_score_from_counts("u", &mine, &mp, &mc, 0.1, LogBase::E).unwrap();
        let b = reference_score_from_counts("u", &twice, &mp, &mc, 0.1, LogBase::E).unwrap();
        if let (Some(a), Some(b)) = (a, b) {
            ensure(a.nearest == b.nearest, || {
                "reference argmin changed under duplication".into()
            })?;
            argmin_checked += 1;
        }
    }

    for _ in 0..200 {
        let width = rng.gen_range(2..7);
        let n = rng.gen_range(3..20);
        let constant = rng.gen_range(0..width + 3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..width)
                    .map(|j| {
                        if j == constant {
                            2.0
                        } else {
                            rng.gen_range(0.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let labels = (0..width).map(|j| format!("v{j}")).collect();
        let m = correlation_matrix(labels, &rows, CorrelationMethod::Pearson).unwrap();
        for i in 0..width {
            let diag = m.get(i, i);
            ensure(
                if i == constant {
                    diag.is_none()
                } else {
                    diag == Some(1.0)
                },
                || format!("diagonal {i} is {diag:?}"),
            )?;
            for j in 0..width {
                ensure(m.get(i, j) == m.get(j, i), || {
                    "correlation matrix not symmetric".into()
                })?;
                ensure(
                    m.get(i, j).is_none_or(|r| (-1.0..=1.0).contains(&r)),
                    || "r outside [-1,1]".into(),
                )?;
            }
        }
    }
    Ok(format!(
        "{corpora} corpora x {} lambdas, max |sum-1| = {worst:.1e}; {argmin_checked} argmin checks",
        lambdas.len()
    ))
}

fn write_corpus(cfg: &SynthConfig, path: &Path) -> Result<usize, String> {
    let corpus = synth::generate(cfg)?;
    let mut out = BufWriter::new(File::create(path).map_err(|e| e.to_string())?);
    corpus.write_jsonl(&mut out).map_err(|e| e.to_string())?;
    out.flush().map_err(|e| e.to_string())?;
    Ok(corpus.document_count())
}

fn pair_config(input: PathBuf, out: PathBuf, pairs: &[(&str, &str)]) -> RunConfig {
    let pairs = pairs
        .iter()
        .map(|(p, c)| CohortPair {
            positive: p.to_string(),
            control: c.to_string(),
        })
        .collect();
    let mut cfg = RunConfig::new(input, pairs);
    cfg.out = out;
    cfg
}

fn metric(out: &RunOutput, metric: &str, pair: &str) -> Result<f64, String> {
    let t = table(&out.report, "vocab_comparison")?;
    let col = column(t, pair)?;
    let row = t
        .rows
        .iter()
        .find(|r| r[0] == metric)
        .ok_or(format!("no {metric} row"))?;
    parse_num(&row[col])
}

/// Criterion 4: the pipeline recovers the effects planted by the generator.
pub fn synthetic_reproduction(workdir: &Path) -> Check {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let input = workdir.join("synthetic.jsonl");
    let docs = write_corpus(&cfg, &input)?;
    let run = pair_config(
        input,
        workdir.join("synthetic-report"),
        &[("positive", "control")],
    );
    let out = pipeline::run(&run).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    let welch = table(&out.report, "welch_tests")?;
    let (f, p) = (column(welch, "feature")?, column(welch, "p_value")?);
    let row = welch
        .rows
        .iter()
        .find(|r| r[f] == "demo-liwc:i")
        .ok_or("no Welch row for category i")?;
    let p_i = parse_num(&row[p])?;

    let behavior = table(&out.report, "behavior_profiles")?;
    let (class, ratio) = (
        column(behavior, "class")?,
        column(behavior, "mean_hashtag_ratio")?,
    );
    let mut ratios = BTreeMap::new();
    for (label, target) in [
        ("positive", cfg.hashtag_rate_positive),
        ("control", cfg.hashtag_rate_control),
    ] {
        let values: Vec<f64> = behavior
            .rows
            .iter()
            .filter(|r| r[class] == label)
            .map(|r| parse_num(&r[ratio]))
            .collect::<Result<_, _>>()?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        ratios.insert(label, (mean, target));
    }

    let corr = table(&out.report, "emotion_correlations")?;
    let (cc, a, b, r) = (
        column(corr, "class")?,
        column(corr, "emotion_a")?,
        column(corr, "emotion_b")?,
        column(corr, "r")?,
    );
    let mut rs = BTreeMap::new();
    for row in &corr.rows {
        let pair = (row[a].as_str(), row[b].as_str());
        if pair == ("joy", "sadness") || pair == ("sadness", "joy") {
            rs.insert(row[cc].clone(), parse_num(&row[r])?);
        }
    }

    let pair = "positive vs control";
    let kl_pc = metric(&out, "kl_positive_control", pair)?;
    let kl_cc = metric(&out, "kl_control_control", pair)?;

    let detail = format!(
        "{docs} docs in {elapsed:.1}s; p(i)={p_i:.2e}; hashtag ratio P={:.4} C={:.4}; r(joy,sadness)={:?}; KL(P||C)={kl_pc:.4} KL(Ca||Cb)={kl_cc:.4}",
        ratios["positive"].0, ratios["control"].0, rs
    );
    ensure(p_i < 0.001, || format!("p(i) not below 0.001: {detail}"))?;
    for (label, (mean, target)) in &ratios {
        ensure((mean - target).abs() <= 0.002, || {
            format!("{label} hashtag ratio off target: {detail}")
        })?;
    }
    ensure(rs.len() == 2 && rs.values().all(|r| *r < -0.9), || {
        format!("joy/sadness correlation: {detail}")
    })?;
    ensure(kl_pc > kl_cc, || format!("KL ordering: {detail}"))?;
    ensure(elapsed < 120.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

/// Criterion 5: one million documents through ingest, analysis and report.
pub fn scale_run(workdir: &Path, documents: usize) -> Check {
    let docs_per_user = 200;
    let users = documents / docs_per_user;
    let cfg = SynthConfig {
        positive_users: users / 2,
        control_users: users - users / 2,
        docs_per_user,
        ..SynthConfig::default()
    };
    let input = workdir.join("scale.jsonl");
    let gen_start = Instant::now();
    let written = write_corpus(&cfg, &input)?;
    let generated = gen_start.elapsed().as_secs_f64();
    let size = fs::metadata(&input).map(|m| m.len()).unwrap_or(0);

    let start = Instant::now();
    let run = pair_config(
        input,
        workdir.join("scale-report"),
        &[("positive", "control")],
    );
    let out = pipeline::run(&run).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let peak = peak_rss_bytes().ok_or("cannot read peak memory")?;
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!(
        "{written} docs ({:.0} MB JSONL, generated in {generated:.1}s) analysed in {elapsed:.1}s on {cpus} core(s); peak RSS {:.2} GB; {} sections",
        size as f64 / 1e6,
        peak as f64 / 1e9,
        out.report.sections.len()
    );
    ensure(written == documents, || {
        format!("generated {written} documents")
    })?;
    ensure(elapsed < 60.0, || format!("too slow: {detail}"))?;
    ensure(peak < 4_000_000_000, || {
        format!("too much memory: {detail}")
    })?;
    Ok(detail)
}

pub const ERISK_VAR: &str = "PSYCHOLEX_ERISK_DIR";
pub const CLPSYCH_VAR: &str = "PSYCHOLEX_CLPSYCH_FILE";

/// Criterion 6: exact numbers on the restricted datasets. `None` when no
/// dataset is configured.
pub fn restricted_data(workdir: &Path) -> Option<Check> {
    let erisk = std::env::var_os(ERISK_VAR).map(PathBuf::from);
    let clpsych = std::env::var_os(CLPSYCH_VAR).map(PathBuf::from);
    if erisk.is_none() && clpsych.is_none() {
        return None;
    }
    Some(restricted_checks(workdir, erisk, clpsych))
}

fn openvocab_run(
    input: PathBuf,
    out: PathBuf,
    pairs: &[(&str, &str)],
    base: LogBase,
) -> Result<RunOutput, String> {
    let mut cfg = pair_config(input, out, pairs);
    cfg.analyses = vec![Analysis::Openvocab];
    cfg.log_base = base;
    cfg.strict = false;
    pipeline::run(&cfg).map_err(|e| e.to_string())
}

pub fn restricted_checks(
    workdir: &Path,
    erisk: Option<PathBuf>,
    clpsych: Option<PathBuf>,
) -> Check {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    if let Some(dir) = erisk {
        let expected = [
            ("depression", 0.59, [0.18, 0.21, 0.08]),
            ("anorexia", 0.65, [0.18, 0.31, 0.07]),
            ("self-harm", 0.44, [0.18, 0.20, 0.10]),
        ];
        let kl_rows = [
            "kl_positive_control",
            "kl_control_positive",
            "kl_control_control",
        ];
        for (name, jac, kls) in expected {
            let input = dir.join(format!("{name}.jsonl"));
            let mut matched_base = None;
            for (label, base) in [("e", LogBase::E), ("2", LogBase::Two)] {
                let out = openvocab_run(
                    input.clone(),
                    workdir.join(format!("erisk-{name}-{label}")),
                    &[("positive", "control")],
                    base,
                )?;
                let pair = "positive vs control";
                let j = metric(&out, "jaccard", pair)?;
                if format!("{j:.2}") != format!("{jac:.2}") {
                    failures.push(format!("{name}: jaccard {j:.4} vs {jac}"));
                }
                let got: Vec<f64> = kl_rows
                    .iter()
                    .map(|m| metric(&out, m, pair))
                    .collect::<Result<_, _>>()?;
                notes.push(format!("{name} base {label}: J={j:.3} KL={got:.3?}"));
                if got.iter().zip(kls).all(|(g, w)| (g - w).abs() <= 0.01) {
                    matched_base = Some(label);
                }
            }
            if matched_base.is_none() {
                failures.push(format!("{name}: no log base reproduces KL {kls:?}"));
            }
        }
    }
    if let Some(file) = clpsych {
        let pairs = [("depression", "control"), ("ptsd", "control")];
        let out = openvocab_run(file, workdir.join("clpsych"), &pairs, LogBase::E)?;
        for ((p, c), want) in pairs.iter().zip([0.26, 0.27]) {
            let j = metric(&out, "jaccard", &format!("{p} vs {c}"))?;
            notes.push(format!("{p}: J={j:.3}"));
            if format!("{j:.2}") != format!("{want:.2}") {
                failures.push(format!("{p}: jaccard {j:.4} vs {want}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} ({})", failures.join("; "), notes.join("; ")))
    }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn without_timestamp(bytes: &[u8]) -> Result<serde_json::Value, String> {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("generated_at");
    }
    Ok(v)
}

type MarkerKey = (String, String, String, String, String);

fn expected_markers(
    out: &RunOutput,
    chart: &str,
    categories: &BTreeSet<String>,
) -> Result<BTreeSet<MarkerKey>, String> {
    let welch = table(&out.report, "welch_tests")?;
    let idx = |name| column(welch, name);
    let (analysis, feature, first, second, relation, p, alpha) = (
        idx("analysis")?,
        idx("feature")?,
        idx("first")?,
        idx("second")?,
        idx("relation")?,
        idx("p_value")?,
        idx("alpha")?,
    );
    let (want_analysis, prefix) = match chart.strip_prefix("boxplot_") {
        Some("emotions") => ("emotions", String::new()),
        Some("markers") => ("behavior", String::new()),
        Some(lex) => ("lexicons", format!("{lex}:")),
        None => return Err(format!("{chart} is not a box plot")),
    };
    let mut out_set = BTreeSet::new();
    for row in &welch.rows {
        if row[analysis] != want_analysis {
            continue;
        }
        let Some(category) = row[feature].strip_prefix(prefix.as_str()) else {
            continue;
        };
        if !categories.contains(category) || parse_num(&row[p])? >= parse_num(&row[alpha])? {
            continue;
        }
        let symbol = match row[relation].as_str() {
            "positive_vs_control" => "*",
            "positive_vs_positive" => "^",
            other => return Err(format!("unknown relation {other}")),
        };
        out_set.insert((
            chart.to_string(),
            category.to_string(),
            row[first].clone(),
            row[second].clone(),
            symbol.to_string(),
        ));
    }
    Ok(out_set)
}

/// Criterion 7: well-formed SVG, reproducible output, faithful markers.
pub fn rendering(workdir: &Path) -> Check {
    let config = workspace_root().join("fixtures/demo/run.json");
    let mut outputs = Vec::new();
    let mut dirs = Vec::new();
    for i in 0..2 {
        let mut cfg = RunConfig::from_file(&config).map_err(|e| e.to_string())?;
        cfg.out = workdir.join(format!("render-{i}"));
        outputs.push(pipeline::run(&cfg).map_err(|e| e.to_string())?);
        dirs.push(cfg.out);
    }
    let files = files_under(&dirs[0]);
    ensure(files == files_under(&dirs[1]), || {
        "the two runs wrote different file sets".into()
    })?;
    let mut svgs = 0;
    let mut expected = BTreeSet::new();
    let mut observed = BTreeSet::new();
    for rel in &files {
        let a = fs::read(dirs[0].join(rel)).map_err(|e| e.to_string())?;
        let b = fs::read(dirs[1].join(rel)).map_err(|e| e.to_string())?;
        if rel.ends_with("metadata.json") {
            ensure(without_timestamp(&a)? == without_timestamp(&b)?, || {
                "metadata differs between runs".into()
            })?;
        } else {
            ensure(a == b, || format!("{} differs between runs", rel.display()))?;
        }
        if rel.extension().is_some_and(|e| e == "svg") {
            let text = String::from_utf8(a).map_err(|e| e.to_string())?;
            let doc =
                roxmltree::Document::parse(&text).map_err(|e| format!("{}: {e}", rel.display()))?;
            svgs += 1;
            let chart = rel.file_stem().unwrap().to_string_lossy().to_string();
            if !chart.starts_with("boxplot_") {
                ensure(!text.contains("sig-marker"), || {
                    format!("{chart} has significance markers")
                })?;
                continue;
            }
            let categories: BTreeSet<String> = doc
                .descendants()
                .filter(|n| n.attribute("class") == Some("box"))
                .filter_map(|n| n.attribute("data-category").map(String::from))
                .collect();
            for n in doc
                .descendants()
                .filter(|n| n.attribute("class") == Some("sig-marker"))
            {
                let (first, second) = n
                    .attribute("data-pair")
                    .and_then(|p| p.split_once('|'))
                    .ok_or("marker without pair")?;
                observed.insert((
                    chart.clone(),
                    n.attribute("data-category").unwrap_or_default().to_string(),
                    first.to_string(),
                    second.to_string(),
                    n.text().unwrap_or_default().to_string(),
                ));
            }
            expected.extend(expected_markers(&outputs[0], &chart, &categories)?);
        }
    }
    ensure(expected == observed, || {
        let missing: Vec<_> = expected.difference(&observed).collect();
        let extra: Vec<_> = observed.difference(&expected).collect();
        format!("markers disagree with the tests: missing {missing:?}, unexpected {extra:?}")
    })?;
    ensure(!observed.is_empty(), || {
        "the demo produced no markers to compare".into()
    })?;
    let golden = super::charts::check_golden()?;
    Ok(format!(
        "{svgs} SVGs well-formed, {} files identical across runs, {} markers match the tests; {golden}",
        files.len(),
        observed.len()
    ))
}
