use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use super::{BinaryReport, ImportanceStat, LassoReport};
use crate::error::{Error, Result};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// metrics.json. The `metrics` object carries exactly accuracy,
/// sensitivity, specificity and f1; the other fields hold the details.
pub fn write_metrics_json(
    path: impl AsRef<Path>,
    forest: Option<&BinaryReport>,
    lasso: Option<&LassoReport>,
) -> Result<()> {
    let mut doc = serde_json::Map::new();
    if let Some(f) = forest {
        let m = &f.metrics;
        doc.insert("metrics".into(), json!(m.core()));
        doc.insert(
            "confusion".into(),
            json!({"tp": m.tp, "fp": m.fp, "tn": m.tn, "fn": m.fn_, "precision": m.precision}),
        );
        doc.insert("zero_division".into(), json!(m.zero_division));
        doc.insert("failed_folds".into(), json!(f.failed_folds));
        doc.insert("predictions".into(), json!(f.predictions));
        doc.insert("importance".into(), json!(f.importance));
        doc.insert("fold_importance".into(), json!(f.fold_importance));
    }
    if let Some(l) = lasso {
        doc.insert(
            "regression".into(),
            json!({"spearman": l.spearman, "predictions": l.predictions}),
        );
    }
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("json value serializes");
    text.push('\n');
    write_text(path.as_ref(), &text)
}

/// `cluster,mean,sd,top4_freq`, one row per cluster.
pub fn write_importance_csv(path: impl AsRef<Path>, stats: &[ImportanceStat]) -> Result<()> {
    let mut text = String::from("cluster,mean,sd,top4_freq\n");
    for s in stats {
        let _ = writeln!(text, "{},{},{},{}", s.cluster, s.mean, s.sd, s.top4_freq);
    }
    write_text(path.as_ref(), &text)
}

/// `case_id,true_grade,predicted`
pub fn write_regression_csv(path: impl AsRef<Path>, report: &LassoReport) -> Result<()> {
    let mut text = String::from("case_id,true_grade,predicted\n");
    for p in &report.predictions {
        let _ = writeln!(text, "{},{},{}", p.case_id, p.true_grade, p.predicted);
    }
    write_text(path.as_ref(), &text)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    )
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y_ticks: &[(f64, String)]) {
    let (x0, y0, x1) = (LEFT, H - BOTTOM, W - RIGHT);
    let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{TOP}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>");
    for (y, label) in y_ticks {
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{x0}\" y2=\"{y:.1}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>",
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>",
        (TOP + y0) / 2.0,
        (TOP + y0) / 2.0
    );
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let step = 10f64.powf(v.log10().floor());
    (v / step).ceil() * step
}

/// Bar chart of mean importance per cluster with whiskers spanning the
/// per-fold minimum and maximum.
pub fn importance_svg(path: impl AsRef<Path>, stats: &[ImportanceStat]) -> Result<()> {
    let mut out = svg_open("Feature importance per cluster");
    let top = nice_max(stats.iter().map(|s| s.max).fold(0.0, f64::max));
    let plot_h = H - BOTTOM - TOP;
    let y_of = |v: f64| H - BOTTOM - v / top * plot_h;
    let ticks: Vec<(f64, String)> = (0..=4).map(|i| {
        let v = top * i as f64 / 4.0;
        (y_of(v), format!("{v:.3}"))
    }).collect();
    axes(&mut out, "cluster", "mean decrease in impurity", &ticks);
    let slot = (W - LEFT - RIGHT) / stats.len().max(1) as f64;
    for (i, s) in stats.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let bw = slot * 0.6;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{:.1}\" fill=\"steelblue\"/>",
            cx - bw / 2.0,
            y_of(s.mean),
            H - BOTTOM - y_of(s.mean)
        );
        let (lo, hi) = (y_of(s.min), y_of(s.max));
        let _ = writeln!(
            out,
            "<path d=\"M{cx:.1} {lo:.1}V{hi:.1}M{:.1} {lo:.1}H{:.1}M{:.1} {hi:.1}H{:.1}\" stroke=\"black\" fill=\"none\"/>",
            cx - 4.0,
            cx + 4.0,
            cx - 4.0,
            cx + 4.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">c{}</text>",
            H - BOTTOM + 16.0,
            s.cluster
        );
    }
    out.push_str("</svg>\n");
    write_text(path.as_ref(), &out)
}

/// Scatter of held-out predicted grade against true grade, with the
/// identity line.
pub fn regression_svg(path: impl AsRef<Path>, report: &LassoReport) -> Result<()> {
    let mut out = svg_open("Predicted against true grade");
    let preds = report.predictions.iter().map(|p| p.predicted);
    let lo = preds.clone().fold(0.0, f64::min).floor().min(-0.5);
    let hi = preds.fold(3.0, f64::max).ceil().max(3.5);
    let plot_h = H - BOTTOM - TOP;
    let plot_w = W - LEFT - RIGHT;
    let y_of = |v: f64| H - BOTTOM - (v - lo) / (hi - lo) * plot_h;
    let x_of = |g: f64| LEFT + (g + 0.5) / 4.0 * plot_w;
    let ticks: Vec<(f64, String)> = ((lo as i64)..=(hi as i64)).map(|v| (y_of(v as f64), v.to_string())).collect();
    axes(&mut out, "true grade", "predicted grade", &ticks);
    for g in 0..4 {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{g}</text>",
            x_of(g as f64),
            H - BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
        x_of(-0.5),
        y_of(-0.5),
        x_of(3.5),
        y_of(3.5)
    );
    for p in &report.predictions {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"darkorange\" fill-opacity=\"0.7\"><title>{} {:.3}</title></circle>",
            x_of(p.true_grade as f64),
            y_of(p.predicted),
            p.case_id,
            p.predicted
        );
    }
    out.push_str("</svg>\n");
    write_text(path.as_ref(), &out)
}
