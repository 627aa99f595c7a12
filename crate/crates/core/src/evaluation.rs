//! Micro-averaged relation scoring and curve emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RelationVocab;
use crate::error::{Error, Result};
use crate::trainer::TrainHistory;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: BTreeMap<String, ClassCounts>,
}

impl Metrics {
    pub fn totals(&self) -> ClassCounts {
        self.per_class.values().fold(ClassCounts::default(), |acc, c| ClassCounts {
            tp: acc.tp + c.tp,
            fp: acc.fp + c.fp,
            fn_: acc.fn_ + c.fn_,
        })
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Micro P/R/F1 over every class except `no_relation`. Predicting
/// `no_relation` is an abstention: it never counts as a false positive, but a
/// positive gold label predicted as `no_relation` is a false negative.
pub fn score(predictions: &[usize], gold: &[usize], vocab: &RelationVocab) -> Result<Metrics> {
    if gold.is_empty() {
        return Err(Error::Argument("cannot score an empty set".into()));
    }
    if predictions.len() != gold.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let nr = vocab.no_relation();
    let mut per_class: BTreeMap<String, ClassCounts> = vocab
        .labels()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != nr)
        .map(|(_, l)| (l.clone(), ClassCounts::default()))
        .collect();
    for (&p, &g) in predictions.iter().zip(gold) {
        for c in [p, g] {
            if c >= vocab.len() {
                return Err(Error::Argument(format!("class index {c} outside the relation vocabulary")));
            }
        }
        if p == g {
            if p != nr {
                per_class.get_mut(vocab.label(p)).expect("known").tp += 1;
            }
            continue;
        }
        if p != nr {
            per_class.get_mut(vocab.label(p)).expect("known").fp += 1;
        }
        if g != nr {
            per_class.get_mut(vocab.label(g)).expect("known").fn_ += 1;
        }
    }
    let mut m = Metrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        per_class,
    };
    let t = m.totals();
    if t.tp + t.fp > 0 {
        m.precision = t.tp as f64 / (t.tp + t.fp) as f64;
    }
    if t.tp + t.fn_ > 0 {
        m.recall = t.tp as f64 / (t.tp + t.fn_) as f64;
    }
    m.f1 = f1(m.precision, m.recall);
    Ok(m)
}

const CURVE_HEADER: &str = "iteration\tlabeled\tselected\tdev_f1\ttest_f1\taugmentation_precision";

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Tab-separated curve data, one row per iteration. Floats use the shortest
/// representation that parses back to the same value.
pub fn curve_table(history: &TrainHistory) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in &history.iterations {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.iteration,
            r.labeled,
            r.selected.len(),
            opt(r.dev.as_ref().map(|m| m.f1)),
            opt(r.test.as_ref().map(|m| m.f1)),
            opt(r.augmentation_precision)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub labeled: usize,
    pub selected: usize,
    pub dev_f1: Option<f64>,
    pub test_f1: Option<f64>,
    pub augmentation_precision: Option<f64>,
}

pub fn parse_curve_table(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing curve header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let bad = |message: String| Error::Parse { line: n + 1, message };
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            let real = |s: &str| -> Result<Option<f64>> {
                if s == "NA" {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(Some).map_err(|e| bad(e.to_string()))
                }
            };
            Ok(CurveRow {
                iteration: int(f[0])?,
                labeled: int(f[1])?,
                selected: int(f[2])?,
                dev_f1: real(f[3])?,
                test_f1: real(f[4])?,
                augmentation_precision: real(f[5])?,
            })
        })
        .collect()
}

/// Minimal line plot of `(x, y)` points with y in [0, 1].
fn svg_plot(title: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let max_x = points.iter().map(|p| p.0).fold(1.0, f64::max);
    let sx = |x: f64| pad + x / max_x * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y.clamp(0.0, 1.0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{tick}</text>"#,
            pad - 4.0,
            sy(tick) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">iteration</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle" font-family="sans-serif" font-size="11">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    if points.len() > 1 {
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
    }
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            sx(x),
            sy(y)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `curves.tsv`, `f1.svg` and `augmentation_precision.svg` to `out_dir`.
pub fn emit_curves(history: &TrainHistory, out_dir: &Path) -> Result<()> {
    if history.iterations.is_empty() {
        return Err(Error::Argument("history has no iterations".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, body: String| {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write("curves.tsv", curve_table(history))?;
    let f1_points: Vec<(f64, f64)> = history
        .iterations
        .iter()
        .filter_map(|r| r.test.as_ref().map(|m| (r.iteration as f64, m.f1)))
        .collect();
    write("f1.svg", svg_plot("Test F1", "F1", &f1_points))?;
    let aug_points: Vec<(f64, f64)> = history
        .iterations
        .iter()
        .filter_map(|r| r.augmentation_precision.map(|p| (r.iteration as f64, p)))
        .collect();
    write(
        "augmentation_precision.svg",
        svg_plot("Augmentation precision", "precision", &aug_points),
    )
}
