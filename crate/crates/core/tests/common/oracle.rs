//! Brute-force reference implementations, written straight from the
//! formulas with no shared code from the library.

use std::collections::{BTreeMap, BTreeSet};

pub fn jaccard(p: &[String], c: &[String]) -> Option<f64> {
    let p: BTreeSet<&String> = p.iter().collect();
    let c: BTreeSet<&String> = c.iter().collect();
    let inter = p.intersection(&c).count();
    let union = p.union(&c).count();
    (union > 0).then(|| inter as f64 / union as f64)
}

fn count(tokens: &[String], w: &str) -> f64 {
    tokens.iter().filter(|t| *t == w).count() as f64
}

/// P(w) = (1 − λ)·c_D(w)/|D| + λ·c_S(w)/|S| over every distinct w in S.
pub fn language_model(d: &[String], s: &[String], lambda: f64) -> BTreeMap<String, f64> {
    let support: BTreeSet<&String> = s.iter().collect();
    support
        .into_iter()
        .map(|w| {
            let p = (1.0 - lambda) * count(d, w) / d.len() as f64
                + lambda * count(s, w) / s.len() as f64;
            (w.clone(), p)
        })
        .collect()
}

pub fn kl(p: &BTreeMap<String, f64>, c: &BTreeMap<String, f64>, base: f64) -> f64 {
    let mut sum = 0.0;
    for (w, pw) in p {
        if *pw > 0.0 {
            sum += pw * (pw / c[w]).log(base);
        }
    }
    sum
}

/// Mean of t_i − t_{i−1} after sorting.
pub fn mean_gap(timestamps: &[i64]) -> Option<f64> {
    if timestamps.len() < 2 {
        return None;
    }
    let mut ts = timestamps.to_vec();
    ts.sort();
    let mut total = 0.0;
    for i in 1..ts.len() {
        total += (ts[i] - ts[i - 1]) as f64;
    }
    Some(total / (ts.len() - 1) as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// (t, df) of the unequal-variance two-sample test.
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |s: &[f64]| {
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df)
}

/// Two-sided Student-t tail by Simpson integration of the density.
pub fn t_two_sided_quadrature(t: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_norm =
        ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let upper = t.abs();
    let n = 20_000;
    let h = upper / n as f64;
    let mut acc = pdf(0.0) + pdf(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(i as f64 * h);
    }
    (1.0 - 2.0 * acc * h / 3.0).max(0.0)
}

pub fn statrs_two_sided(t: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid df");
    2.0 * dist.cdf(-t.abs())
}
