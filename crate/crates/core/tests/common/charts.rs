use std::collections::BTreeMap;
use std::fs;

use psycholex::behavior::{GapCell, MonthlyGapTable};
use psycholex::report::{
    BoxCategory, BoxplotChart, HeatmapChart, HeatmapPanel, LmCurve, LmPlot, RadarChart,
    RadarSeries, Section, SectionBody, SigAnnotation, TimegapChart,
};
use psycholex::stats::{box_stats, CorrelationMatrix, SigMarker};

use super::{golden_dir, Check};

pub const BLESS_VAR: &str = "PSYCHOLEX_BLESS";

/// Hand-built charts of every kind, frozen as golden SVGs.
pub fn golden_sections() -> Vec<Section> {
    let boxes = |xs: &[f64]| Some(box_stats(xs).unwrap());
    let boxplot = BoxplotChart {
        title: "Category proportions".into(),
        y_label: "fraction of documents".into(),
        classes: vec!["depression".into(), "anorexia".into(), "control".into()],
        categories: vec![
            BoxCategory {
                name: "i".into(),
                boxes: vec![
                    boxes(&[0.6, 0.7, 0.72, 0.8, 0.95]),
                    boxes(&[0.5, 0.55, 0.6, 0.62, 0.1]),
                    boxes(&[0.3, 0.35, 0.4, 0.45, 0.5]),
                ],
                markers: vec![
                    SigAnnotation {
                        marker: SigMarker::VsControl,
                        first: "depression".into(),
                        second: "control".into(),
                        p_value: 1e-5,
                    },
                    SigAnnotation {
                        marker: SigMarker::VsPositive,
                        first: "depression".into(),
                        second: "anorexia".into(),
                        p_value: 4e-4,
                    },
                ],
            },
            BoxCategory {
                name: "we".into(),
                boxes: vec![boxes(&[0.1, 0.2, 0.2, 0.3]), None, boxes(&[0.2, 0.25, 0.3])],
                markers: vec![],
            },
        ],
    };
    let radar = RadarChart {
        title: "Emotions".into(),
        axes: ["joy", "sadness", "anger", "fear", "trust"]
            .map(String::from)
            .to_vec(),
        series: vec![
            RadarSeries {
                label: "depression".into(),
                values: vec![3.0, 9.0, 2.5, 4.0, 1.0],
            },
            RadarSeries {
                label: "control".into(),
                values: vec![6.0, 3.0, 1.5, 2.0, 2.5],
            },
        ],
    };
    let labels: Vec<String> = ["joy", "sadness", "anger"].map(String::from).to_vec();
    let heatmap = HeatmapChart {
        title: "Emotion correlations".into(),
        panels: vec![
            HeatmapPanel {
                label: "depression".into(),
                matrix: CorrelationMatrix {
                    labels: labels.clone(),
                    values: vec![
                        vec![Some(1.0), Some(-0.93), Some(0.1)],
                        vec![Some(-0.93), Some(1.0), None],
                        vec![Some(0.1), None, Some(1.0)],
                    ],
                },
            },
            HeatmapPanel {
                label: "control".into(),
                matrix: CorrelationMatrix::identity(labels),
            },
        ],
    };
    let mut classes = BTreeMap::new();
    let cell = |h: f64, s: f64, n: u64| GapCell {
        mean: h * 3600.0,
        std: s * 3600.0,
        count: n,
    };
    classes.insert(
        "depression".to_string(),
        BTreeMap::from([
            (1, cell(20.0, 5.0, 30)),
            (2, cell(25.0, 8.0, 12)),
            (4, cell(18.0, 4.0, 9)),
        ]),
    );
    classes.insert(
        "control".to_string(),
        BTreeMap::from([
            (1, cell(30.0, 6.0, 40)),
            (2, cell(33.0, 7.0, 22)),
            (3, cell(35.0, 9.0, 8)),
        ]),
    );
    let timegap = TimegapChart {
        title: "Mean time gap per month".into(),
        table: MonthlyGapTable { classes },
    };
    let zipf = |s: f64| -> Vec<f64> {
        let raw: Vec<f64> = (1..=400).map(|r| 1.0 / (r as f64).powf(s)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    };
    let lm = LmPlot {
        title: "Language models".into(),
        support_size: 400,
        curves: vec![
            LmCurve::from_sorted("depression", &zipf(1.1)),
            LmCurve::from_sorted("control", &zipf(0.9)),
        ],
    };
    vec![
        Section {
            name: "golden_boxplot".into(),
            body: SectionBody::Boxplot(boxplot),
        },
        Section {
            name: "golden_radar".into(),
            body: SectionBody::Radar(radar),
        },
        Section {
            name: "golden_heatmap".into(),
            body: SectionBody::Heatmap(heatmap),
        },
        Section {
            name: "golden_timegap".into(),
            body: SectionBody::Lineplot(timegap),
        },
        Section {
            name: "golden_lm".into(),
            body: SectionBody::Lmplot(lm),
        },
    ]
}

/// Renders every golden chart and compares it byte for byte with the frozen
/// copy. With `PSYCHOLEX_BLESS` set the frozen copies are rewritten instead.
pub fn check_golden() -> Check {
    let bless = std::env::var_os(BLESS_VAR).is_some();
    let dir = golden_dir();
    let mut compared = 0;
    for section in golden_sections() {
        let svg = section
            .render()
            .map_err(|e| format!("{}: {e}", section.name))?;
        roxmltree::Document::parse(&svg).map_err(|e| format!("{}: {e}", section.name))?;
        let path = dir.join(format!("{}.svg", section.name));
        if bless {
            fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            fs::write(&path, &svg).map_err(|e| e.to_string())?;
        } else {
            let frozen = fs::read_to_string(&path)
                .map_err(|e| format!("{}: {e} (set {BLESS_VAR}=1 to create)", path.display()))?;
            if frozen != svg {
                return Err(format!("{} differs from its golden copy", section.name));
            }
        }
        compared += 1;
    }
    Ok(format!("{compared} golden charts match"))
}
