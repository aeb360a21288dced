//! Tables, SVG charts and the on-disk report layout.
//!
//! Every chart is a plain serializable struct. Rendering is deterministic:
//! identical input produces identical bytes. Each SVG carries its own input
//! as JSON inside a `<metadata id="source-data">` element.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::MonthlyGapTable;
use crate::stats::{BoxStats, CorrelationMatrix, SigMarker};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;

/// Paul Tol's muted scheme extended to twelve colours.
pub const PALETTE: [&str; 12] = [
    "#332288", "#88CCEE", "#44AA99", "#117733", "#999933", "#DDCC77", "#CC6677", "#882255",
    "#AA4499", "#661100", "#6699CC", "#888888",
];

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot render {0}: no data")]
    EmptyChart(&'static str),
    #[error("heatmap panels do not share labels")]
    LabelMismatch,
    #[error("invalid report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' && c != '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Fixed-precision coordinate formatting.
fn f(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(x: f64) -> String {
    if x == 0.0 || (x.abs() >= 0.01 && x.abs() < 10_000.0) {
        let s = format!("{x:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    } else {
        format!("{x:.1e}")
    }
}

struct Svg {
    buf: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut buf = String::new();
        let _ = write!(
            buf,
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n<title>{t}</title>\n<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#FFFFFF\"/>\n<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{t}</text>\n",
            w = WIDTH,
            h = HEIGHT,
            cx = f(WIDTH / 2.0),
            t = escape(title)
        );
        Self { buf }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\"{extra}/>",
            f(x1),
            f(y1),
            f(x2),
            f(y2)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"{extra}/>",
            f(x),
            f(y),
            f(w.max(0.0)),
            f(h.max(0.0))
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, body: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\"{extra}>{}</text>",
            f(x),
            f(y),
            escape(body)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"{extra}/>",
            f(x),
            f(y),
            f(r)
        );
    }

    fn points(pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|(x, y)| format!("{},{}", f(*x), f(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"2\"{extra}/>",
            Self::points(pts)
        );
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<polygon points=\"{}\" fill=\"{fill}\"{extra}/>",
            Self::points(pts)
        );
    }

    fn legend(&mut self, labels: &[String]) {
        let mut x = 60.0;
        for (i, label) in labels.iter().enumerate() {
            self.rect(x, 36.0, 12.0, 12.0, color(i), "");
            self.text(x + 16.0, 46.0, "start", label, " class=\"legend\"");
            x += 24.0 + 7.0 * label.chars().count() as f64;
        }
    }

    fn finish<T: Serialize>(mut self, source: &T) -> String {
        let json = serde_json::to_string(source).expect("chart data serializes");
        let json = json.replace("]]>", "]]]]><![CDATA[>");
        let _ = write!(
            self.buf,
            "<metadata id=\"source-data\"><![CDATA[{json}]]></metadata>\n</svg>\n"
        );
        self.buf
    }
}

/// Linear mapping from data range to pixel range.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if (d1 - d0).abs() < f64::EPSILON {
            (d0 - 0.5, d1 + 0.5)
        } else {
            (d0, d1)
        };
        Self { d0, d1, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.d0 + (self.d1 - self.d0) * i as f64 / n as f64)
            .collect()
    }
}

fn y_axis(
    svg: &mut Svg,
    scale: &Scale,
    x: f64,
    x_end: f64,
    label: &str,
    fmt: impl Fn(f64) -> String,
) {
    svg.line(x, scale.p0, x, scale.p1, "#000000", "");
    for t in scale.ticks(5) {
        let y = scale.map(t);
        svg.line(x - 4.0, y, x, y, "#000000", "");
        svg.line(x, y, x_end, y, "#E5E5E5", "");
        svg.text(x - 6.0, y + 4.0, "end", &fmt(t), "");
    }
    let _ = writeln!(
        svg.buf,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        f((scale.p0 + scale.p1) / 2.0),
        f((scale.p0 + scale.p1) / 2.0),
        escape(label)
    );
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigAnnotation {
    pub marker: SigMarker,
    pub first: String,
    pub second: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCategory {
    pub name: String,
    /// Aligned with [`BoxplotChart::classes`]; `None` when a class has no
    /// data for this category.
    pub boxes: Vec<Option<BoxStats>>,
    pub markers: Vec<SigAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotChart {
    pub title: String,
    pub y_label: String,
    pub classes: Vec<String>,
    pub categories: Vec<BoxCategory>,
}

/// Grouped box-and-whisker chart with significance markers above each
/// category.
pub fn render_boxplot(chart: &BoxplotChart) -> Result<String, ReportError> {
    let all: Vec<&BoxStats> = chart
        .categories
        .iter()
        .flat_map(|c| c.boxes.iter().flatten())
        .collect();
    if all.is_empty() {
        return Err(ReportError::EmptyChart("boxplot"));
    }
    let lo = all
        .iter()
        .map(|b| b.min)
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let hi = all.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    let (left, right, top, bottom) = (70.0, WIDTH - 20.0, 90.0, HEIGHT - 80.0);
    let scale = Scale::new(lo, hi, bottom, top);
    let mut svg = Svg::new(&chart.title);
    svg.legend(&chart.classes);
    y_axis(&mut svg, &scale, left, right, &chart.y_label, tick_label);
    svg.line(left, bottom, right, bottom, "#000000", "");

    let band = (right - left) / chart.categories.len() as f64;
    let slots = chart.classes.len().max(1) as f64;
    let box_w = (band * 0.8 / slots).min(40.0);
    for (ci, cat) in chart.categories.iter().enumerate() {
        let x0 = left + band * ci as f64;
        let center = x0 + band / 2.0;
        let _ = writeln!(
            svg.buf,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" transform=\"rotate(-35 {} {})\">{}</text>",
            f(center),
            f(bottom + 16.0),
            f(center),
            f(bottom + 16.0),
            escape(&cat.name)
        );
        let group_w = box_w * slots;
        for (k, stats) in cat.boxes.iter().enumerate() {
            let Some(b) = stats else { continue };
            let x = center - group_w / 2.0 + box_w * k as f64 + box_w * 0.1;
            let w = box_w * 0.8;
            let mid = x + w / 2.0;
            let c = color(k);
            let tag = format!(
                " class=\"box\" data-category=\"{}\" data-class=\"{}\"",
                escape(&cat.name),
                escape(&chart.classes[k])
            );
            svg.line(
                mid,
                scale.map(b.lower_whisker),
                mid,
                scale.map(b.q1),
                "#333333",
                "",
            );
            svg.line(
                mid,
                scale.map(b.q3),
                mid,
                scale.map(b.upper_whisker),
                "#333333",
                "",
            );
            svg.line(
                x + w * 0.25,
                scale.map(b.lower_whisker),
                x + w * 0.75,
                scale.map(b.lower_whisker),
                "#333333",
                "",
            );
            svg.line(
                x + w * 0.25,
                scale.map(b.upper_whisker),
                x + w * 0.75,
                scale.map(b.upper_whisker),
                "#333333",
                "",
            );
            let (y_top, y_bot) = (scale.map(b.q3), scale.map(b.q1));
            svg.rect(
                x,
                y_top,
                w,
                y_bot - y_top,
                c,
                &format!("{tag} fill-opacity=\"0.6\" stroke=\"#333333\""),
            );
            svg.line(
                x,
                scale.map(b.median),
                x + w,
                scale.map(b.median),
                "#000000",
                " stroke-width=\"2\"",
            );
            for o in &b.outliers {
                svg.circle(mid, scale.map(*o), 2.0, "none", &format!(" stroke=\"{c}\""));
            }
        }
        for (mi, m) in cat.markers.iter().enumerate() {
            svg.text(
                center,
                top - 6.0 - 12.0 * mi as f64,
                "middle",
                m.marker.symbol(),
                &format!(
                    " class=\"sig-marker\" font-size=\"14\" data-category=\"{}\" data-pair=\"{}|{}\"",
                    escape(&cat.name),
                    escape(&m.first),
                    escape(&m.second)
                ),
            );
        }
    }
    Ok(svg.finish(chart))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarChart {
    pub title: String,
    pub axes: Vec<String>,
    pub series: Vec<RadarSeries>,
}

/// One polygon per class on a shared linear scale starting at zero.
pub fn render_radar(chart: &RadarChart) -> Result<String, ReportError> {
    if chart.axes.is_empty() || chart.series.is_empty() {
        return Err(ReportError::EmptyChart("radar"));
    }
    let n = chart.axes.len();
    let max = chart
        .series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(0.0f64, f64::max);
    let max = if max > 0.0 { max } else { 1.0 };
    let (cx, cy, radius) = (WIDTH / 2.0, HEIGHT / 2.0 + 30.0, 180.0);
    let point = |axis: usize, v: f64| {
        let angle = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * axis as f64 / n as f64;
        let r = radius * (v / max).max(0.0);
        (cx + r * angle.cos(), cy + r * angle.sin())
    };
    let mut svg = Svg::new(&chart.title);
    let labels: Vec<String> = chart.series.iter().map(|s| s.label.clone()).collect();
    svg.legend(&labels);
    for ring in 1..=4 {
        let v = max * ring as f64 / 4.0;
        let pts: Vec<_> = (0..n).map(|a| point(a, v)).collect();
        svg.polygon(&pts, "none", " stroke=\"#DDDDDD\"");
        let (x, y) = point(0, v);
        svg.text(
            x + 4.0,
            y,
            "start",
            &tick_label(v),
            " fill=\"#666666\" font-size=\"10\"",
        );
    }
    for (a, axis) in chart.axes.iter().enumerate() {
        let (x, y) = point(a, max);
        svg.line(cx, cy, x, y, "#BBBBBB", "");
        let (lx, ly) = point(a, max * 1.12);
        let anchor = if (lx - cx).abs() < 1.0 {
            "middle"
        } else if lx > cx {
            "start"
        } else {
            "end"
        };
        svg.text(lx, ly + 4.0, anchor, axis, "");
    }
    for (i, s) in chart.series.iter().enumerate() {
        let pts: Vec<_> = s
            .values
            .iter()
            .enumerate()
            .map(|(a, v)| point(a, *v))
            .collect();
        svg.polygon(
            &pts,
            color(i),
            &format!(
                " class=\"series\" data-class=\"{}\" fill-opacity=\"0.2\" stroke=\"{}\" stroke-width=\"2\"",
                escape(&s.label),
                color(i)
            ),
        );
    }
    Ok(svg.finish(chart))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapPanel {
    pub label: String,
    pub matrix: CorrelationMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapChart {
    pub title: String,
    pub panels: Vec<HeatmapPanel>,
}

/// Diverging blue–white–red over [-1, 1].
pub fn diverging_color(r: f64) -> String {
    let r = r.clamp(-1.0, 1.0);
    let (lo, hi) = if r < 0.0 {
        ((33.0, 102.0, 172.0), -r)
    } else {
        ((178.0, 24.0, 43.0), r)
    };
    let mix = |c: f64| (255.0 + (c - 255.0) * hi).round() as u8;
    format!("#{:02X}{:02X}{:02X}", mix(lo.0), mix(lo.1), mix(lo.2))
}

/// Side-by-side correlation heatmaps; null cells are left blank.
pub fn render_heatmap(chart: &HeatmapChart) -> Result<String, ReportError> {
    let Some(first) = chart.panels.first() else {
        return Err(ReportError::EmptyChart("heatmap"));
    };
    if chart
        .panels
        .iter()
        .any(|p| p.matrix.labels != first.matrix.labels)
    {
        return Err(ReportError::LabelMismatch);
    }
    let n = first.matrix.labels.len().max(1);
    let panels = chart.panels.len() as f64;
    let label_w = 90.0;
    let panel_w = (WIDTH - 20.0) / panels;
    let cell = ((panel_w - label_w - 10.0) / n as f64).min((HEIGHT - 150.0) / n as f64);
    let top = 70.0;
    let mut svg = Svg::new(&chart.title);
    for (pi, panel) in chart.panels.iter().enumerate() {
        let x0 = 10.0 + panel_w * pi as f64 + label_w;
        svg.text(
            x0 + cell * n as f64 / 2.0,
            top - 20.0,
            "middle",
            &panel.label,
            " font-size=\"14\"",
        );
        for (i, label) in panel.matrix.labels.iter().enumerate() {
            let y = top + cell * i as f64;
            svg.text(
                x0 - 4.0,
                y + cell / 2.0 + 4.0,
                "end",
                label,
                " font-size=\"10\"",
            );
            let lx = x0 + cell * i as f64 + cell / 2.0;
            let ly = top + cell * n as f64 + 8.0;
            let _ = writeln!(
                svg.buf,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\" transform=\"rotate(-60 {} {})\">{}</text>",
                f(lx),
                f(ly),
                f(lx),
                f(ly),
                escape(label)
            );
            for j in 0..panel.matrix.labels.len() {
                let Some(r) = panel.matrix.values[i][j] else {
                    continue;
                };
                svg.rect(
                    x0 + cell * j as f64,
                    y,
                    cell,
                    cell,
                    &diverging_color(r),
                    &format!(
                        " class=\"cell\" data-row=\"{i}\" data-col=\"{j}\" data-panel=\"{pi}\""
                    ),
                );
            }
        }
    }
    // colour bar
    let (bx, by, bw) = (WIDTH / 2.0 - 150.0, HEIGHT - 30.0, 300.0);
    for k in 0..20 {
        let r = -1.0 + 2.0 * (k as f64 + 0.5) / 20.0;
        svg.rect(
            bx + bw * k as f64 / 20.0,
            by,
            bw / 20.0,
            10.0,
            &diverging_color(r),
            "",
        );
    }
    svg.text(bx - 4.0, by + 9.0, "end", "-1", "");
    svg.text(bx + bw + 4.0, by + 9.0, "start", "1", "");
    Ok(svg.finish(chart))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimegapChart {
    pub title: String,
    pub table: MonthlyGapTable,
}

/// Mean posting gap (hours) per month with ±1 standard deviation bands.
/// Missing months break the line.
pub fn render_timegap(chart: &TimegapChart) -> Result<String, ReportError> {
    if chart.table.is_empty() {
        return Err(ReportError::EmptyChart("time-gap plot"));
    }
    let hi = chart
        .table
        .classes
        .values()
        .flat_map(|m| m.values())
        .map(|c| c.mean_hours() + c.std_hours())
        .fold(0.0f64, f64::max);
    let (left, right, top, bottom) = (70.0, WIDTH - 20.0, 70.0, HEIGHT - 50.0);
    let ys = Scale::new(0.0, if hi > 0.0 { hi } else { 1.0 }, bottom, top);
    let xs = Scale::new(1.0, 12.0, left + 20.0, right - 20.0);
    let mut svg = Svg::new(&chart.title);
    let labels: Vec<String> = chart.table.classes.keys().cloned().collect();
    svg.legend(&labels);
    y_axis(
        &mut svg,
        &ys,
        left,
        right,
        "mean time-gap (hours)",
        tick_label,
    );
    svg.line(left, bottom, right, bottom, "#000000", "");
    for (m, name) in MONTHS.iter().enumerate() {
        let x = xs.map(m as f64 + 1.0);
        svg.line(x, bottom, x, bottom + 4.0, "#000000", "");
        svg.text(x, bottom + 18.0, "middle", name, "");
    }
    for (i, (label, months)) in chart.table.classes.iter().enumerate() {
        let c = color(i);
        let mut runs: Vec<Vec<(u32, f64, f64)>> = Vec::new();
        let mut prev: Option<u32> = None;
        for (&month, cell) in months {
            if prev.is_none_or(|p| p + 1 != month) {
                runs.push(Vec::new());
            }
            runs.last_mut().expect("run started").push((
                month,
                cell.mean_hours(),
                cell.std_hours(),
            ));
            prev = Some(month);
        }
        for run in &runs {
            let upper: Vec<_> = run
                .iter()
                .map(|(m, mu, sd)| (xs.map(*m as f64), ys.map(mu + sd)))
                .collect();
            let lower: Vec<_> = run
                .iter()
                .rev()
                .map(|(m, mu, sd)| (xs.map(*m as f64), ys.map((mu - sd).max(0.0))))
                .collect();
            let band: Vec<_> = upper.into_iter().chain(lower).collect();
            svg.polygon(
                &band,
                c,
                &format!(
                    " class=\"band\" data-class=\"{}\" fill-opacity=\"0.15\"",
                    escape(label)
                ),
            );
            let line: Vec<_> = run
                .iter()
                .map(|(m, mu, _)| (xs.map(*m as f64), ys.map(*mu)))
                .collect();
            if line.len() > 1 {
                svg.polyline(
                    &line,
                    c,
                    &format!(" class=\"mean-line\" data-class=\"{}\"", escape(label)),
                );
            }
            for (x, y) in line {
                svg.circle(x, y, 3.0, c, "");
            }
        }
    }
    Ok(svg.finish(chart))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmCurve {
    pub label: String,
    /// 1-based ranks of the plotted points.
    pub ranks: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl LmCurve {
    /// Keeps every rank up to 200, then about 300 evenly spaced ranks, and
    /// always the last one.
    pub fn from_sorted(label: &str, sorted_desc: &[f64]) -> Self {
        let n = sorted_desc.len();
        let mut ranks: Vec<usize> = (1..=n.min(200)).collect();
        if n > 200 {
            let step = ((n - 200) as f64 / 300.0).max(1.0);
            let mut r = 200.0 + step;
            while (r as usize) < n {
                let rank = r as usize;
                if ranks.last() != Some(&rank) {
                    ranks.push(rank);
                }
                r += step;
            }
            ranks.push(n);
        }
        let probabilities = ranks.iter().map(|r| sorted_desc[r - 1]).collect();
        Self {
            label: label.to_string(),
            ranks,
            probabilities,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmPlot {
    pub title: String,
    pub support_size: usize,
    pub curves: Vec<LmCurve>,
}

/// Rank-ordered probability curves on a log-scaled y axis.
pub fn render_lm_plot(chart: &LmPlot) -> Result<String, ReportError> {
    let pts: Vec<f64> = chart
        .curves
        .iter()
        .flat_map(|c| c.probabilities.iter().copied())
        .filter(|p| *p > 0.0)
        .collect();
    if pts.is_empty() {
        return Err(ReportError::EmptyChart("language-model plot"));
    }
    let lo = pts
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .log10()
        .floor();
    let hi = pts
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .log10()
        .ceil();
    let max_rank = chart
        .curves
        .iter()
        .flat_map(|c| c.ranks.last().copied())
        .max()
        .unwrap_or(1)
        .max(2);
    let (left, right, top, bottom) = (80.0, WIDTH - 20.0, 70.0, HEIGHT - 50.0);
    let ys = Scale::new(lo, hi, bottom, top);
    let xs = Scale::new(1.0, max_rank as f64, left, right);
    let mut svg = Svg::new(&chart.title);
    let labels: Vec<String> = chart.curves.iter().map(|c| c.label.clone()).collect();
    svg.legend(&labels);
    svg.line(left, bottom, left, top, "#000000", "");
    let decades = (hi - lo).max(1.0) as i32;
    for k in 0..=decades {
        let e = lo + k as f64;
        let y = ys.map(e);
        svg.line(left - 4.0, y, right, y, "#E5E5E5", "");
        svg.text(left - 6.0, y + 4.0, "end", &format!("1e{}", e as i32), "");
    }
    let _ = writeln!(
        svg.buf,
        "<text x=\"16\" y=\"{c}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {c})\">probability (log scale)</text>",
        c = f((top + bottom) / 2.0)
    );
    svg.line(left, bottom, right, bottom, "#000000", "");
    for t in xs.ticks(5) {
        let x = xs.map(t);
        svg.line(x, bottom, x, bottom + 4.0, "#000000", "");
        svg.text(
            x,
            bottom + 18.0,
            "middle",
            &format!("{}", t.round() as u64),
            "",
        );
    }
    svg.text(
        (left + right) / 2.0,
        HEIGHT - 12.0,
        "middle",
        "word rank",
        "",
    );
    for (i, curve) in chart.curves.iter().enumerate() {
        let line: Vec<_> = curve
            .ranks
            .iter()
            .zip(&curve.probabilities)
            .filter(|(_, p)| **p > 0.0)
            .map(|(r, p)| (xs.map(*r as f64), ys.map(p.log10())))
            .collect();
        svg.polyline(
            &line,
            color(i),
            &format!(" class=\"curve\" data-class=\"{}\"", escape(&curve.label)),
        );
    }
    Ok(svg.finish(chart))
}

/// A CSV-backed table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Io {
            path: PathBuf::from("<memory>"),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip formatting; empty for missing values.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        String::new()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum SectionBody {
    Table(Table),
    Boxplot(BoxplotChart),
    Radar(RadarChart),
    Heatmap(HeatmapChart),
    Lineplot(TimegapChart),
    Lmplot(LmPlot),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub body: SectionBody,
}

impl Section {
    pub fn is_chart(&self) -> bool {
        !matches!(self.body, SectionBody::Table(_))
    }

    pub fn render(&self) -> Result<String, ReportError> {
        match &self.body {
            SectionBody::Table(t) => t.to_csv(),
            SectionBody::Boxplot(c) => render_boxplot(c),
            SectionBody::Radar(c) => render_radar(c),
            SectionBody::Heatmap(c) => render_heatmap(c),
            SectionBody::Lineplot(c) => render_timegap(c),
            SectionBody::Lmplot(c) => render_lm_plot(c),
        }
    }

    /// Path relative to the report directory.
    pub fn relative_path(&self) -> PathBuf {
        if self.is_chart() {
            Path::new("charts").join(format!("{}.svg", self.name))
        } else {
            Path::new("tables").join(format!("{}.csv", self.name))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub lambda: f64,
    pub log_base: String,
    pub seed: u64,
    pub alpha: f64,
    pub correlation_method: String,
    pub correlation_input: String,
    pub reference_fraction: f64,
    pub analyses: Vec<String>,
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub artifact_version: String,
    pub corpus_digest: String,
    pub platform: String,
    pub records: usize,
    pub skipped_records: usize,
    pub empty_documents: usize,
    pub settings: RunSettings,
    /// Lexicon name → SHA-256 of its source text.
    pub lexicon_digests: BTreeMap<String, String>,
    pub tests_performed: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metadata: Metadata,
    pub sections: Vec<Section>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl AnalysisReport {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn charts(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| s.is_chart())
    }

    pub fn tables(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| !s.is_chart())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `metadata.json`, `report.json`, `tables/*.csv` and
    /// `charts/*.svg` under `dir`. `generated_at` goes into
    /// `metadata.json` only.
    pub fn write(&self, dir: &Path, generated_at: &str) -> Result<Vec<PathBuf>, ReportError> {
        let mut written = Vec::new();
        for section in &self.sections {
            let path = dir.join(section.relative_path());
            write_file(&path, section.render()?.as_bytes())?;
            written.push(path);
        }
        let mut meta = serde_json::to_value(&self.metadata)?;
        if let serde_json::Value::Object(map) = &mut meta {
            map.insert("generated_at".into(), generated_at.into());
        }
        let meta_path = dir.join("metadata.json");
        write_file(
            &meta_path,
            (serde_json::to_string_pretty(&meta)? + "\n").as_bytes(),
        )?;
        written.push(meta_path);
        let report_path = dir.join("report.json");
        write_file(&report_path, self.to_json()?.as_bytes())?;
        written.push(report_path);
        Ok(written)
    }
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), ReportError> {
    write_file(path, contents.as_bytes())
}
