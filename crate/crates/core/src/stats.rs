//! Statistics kernel: Welch's t-test, correlation, and box-plot summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Significance threshold used unless configured otherwise.
pub const DEFAULT_ALPHA: f64 = 0.001;

const BETA_EPS: f64 = 1e-12;
const BETA_MAX_ITER: usize = 300;
const FPMIN: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample too small: need at least {needed} values, got {got}")]
    SampleTooSmall { needed: usize, got: usize },
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("rows have inconsistent width")]
    RaggedRows,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divides by n - 1). Zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Natural log of the gamma function (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function, modified Lentz.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_EPS {
            return h;
        }
    }
    log::warn!("incomplete beta did not converge (a={a}, b={b}, x={x})");
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_statistic: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
    pub significant_at: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Both samples had zero variance, so t is 0 or infinite by convention.
    pub degenerate: bool,
}

impl WelchResult {
    pub fn is_significant(&self) -> bool {
        self.p_value < self.significant_at
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.significant_at = alpha;
        self
    }
}

/// Welch's unequal-variance two-sample t-test at the default alpha.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::SampleTooSmall {
                needed: 2,
                got: s.len(),
            });
        }
        check_finite(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mean_a, mean_b) = (mean(a), mean(b));
    let va = sample_variance(a) / na;
    let vb = sample_variance(b) / nb;
    let se2 = va + vb;
    let base = WelchResult {
        t_statistic: 0.0,
        degrees_of_freedom: na + nb - 2.0,
        p_value: 1.0,
        significant_at: DEFAULT_ALPHA,
        n_a: a.len(),
        n_b: b.len(),
        mean_a,
        mean_b,
        degenerate: false,
    };
    if se2 == 0.0 {
        if mean_a == mean_b {
            return Ok(WelchResult {
                degenerate: true,
                ..base
            });
        }
        log::warn!("Welch test on two constant samples with different means; reporting p = 0");
        return Ok(WelchResult {
            t_statistic: if mean_a > mean_b {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            p_value: 0.0,
            degenerate: true,
            ..base
        });
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided(t, df),
        ..base
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

/// Pearson product-moment correlation. `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::SampleTooSmall {
            needed: 2,
            got: x.len(),
        });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Average ranks (1-based), ties share their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = rank;
        }
        start = end;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    check_finite(x)?;
    check_finite(y)?;
    pearson(&ranks(x), &ranks(y))
}

pub fn correlation(
    x: &[f64],
    y: &[f64],
    method: CorrelationMethod,
) -> Result<Option<f64>, StatsError> {
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => spearman(x, y),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major; `None` where a variable has zero variance.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn by_label(&self, a: &str, b: &str) -> Option<f64> {
        self.get(self.index_of(a)?, self.index_of(b)?)
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let n = labels.len();
        let values = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Some(if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        Self { labels, values }
    }
}

/// Pairwise correlation between the columns of `rows` (one row per
/// observation).
pub fn correlation_matrix(
    labels: Vec<String>,
    rows: &[Vec<f64>],
    method: CorrelationMethod,
) -> Result<CorrelationMatrix, StatsError> {
    if rows.len() < 2 {
        return Err(StatsError::SampleTooSmall {
            needed: 2,
            got: rows.len(),
        });
    }
    let width = labels.len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(StatsError::RaggedRows);
    }
    let columns: Vec<Vec<f64>> = (0..width)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    let mut values = vec![vec![None; width]; width];
    for i in 0..width {
        for j in i..width {
            let r = correlation(&columns[i], &columns[j], method)?;
            let r = if i == j { r.map(|_| 1.0) } else { r };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { labels, values })
}

/// Correlation across users of the ten per-emotion values.
pub fn emotion_correlation_matrix(
    profiles: &[[f64; crate::lexicons::EMOTION_COUNT]],
    method: CorrelationMethod,
) -> Result<CorrelationMatrix, StatsError> {
    let labels = crate::lexicons::Emotion::ALL
        .iter()
        .map(|e| e.name().to_string())
        .collect();
    let rows: Vec<Vec<f64>> = profiles.iter().map(|p| p.to_vec()).collect();
    correlation_matrix(labels, &rows, method)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(sample: &[f64]) -> Result<BoxStats, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::SampleTooSmall { needed: 1, got: 0 });
    }
    check_finite(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = sorted
        .iter()
        .copied()
        .filter(|x| *x >= lo_fence && *x <= hi_fence);
    let lower_whisker = inside.clone().next().unwrap_or(q1);
    let upper_whisker = inside.clone().next_back().unwrap_or(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|x| *x < lo_fence || *x > hi_fence)
        .collect();
    Ok(BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        mean: mean(&sorted),
        lower_whisker,
        upper_whisker,
        outliers,
    })
}

/// Marker drawn above a significant pair in box plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigMarker {
    /// Positive cohort vs its control, drawn as `*`.
    VsControl,
    /// Positive cohort vs another positive cohort, drawn as `^`.
    VsPositive,
}

impl SigMarker {
    pub fn symbol(self) -> &'static str {
        match self {
            SigMarker::VsControl => "*",
            SigMarker::VsPositive => "^",
        }
    }
}
