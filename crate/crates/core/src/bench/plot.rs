use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_text;
use crate::synthgen::{Episode, Pair};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 120.0;
const GAP: f64 = 16.0;
const TOP: f64 = 36.0;

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, extra: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"    <polyline fill="none" stroke="{stroke}" stroke-width="1.4"{extra} points="{}"/>"#,
        coords.join(" ")
    );
}

fn panel(out: &mut String, id: &str, ox: f64, oy: f64, pair: &Pair, pred: &[f64], (lo, hi): (f64, f64)) {
    let n = pair.0.len() + pair.1.len();
    let sx = |i: usize| ox + PANEL_W * i as f64 / (n - 1).max(1) as f64;
    let sy = |v: f64| oy + PANEL_H * (1.0 - (v - lo) / (hi - lo));
    let _ = writeln!(out, r#"  <g class="panel" id="{id}">"#);
    let _ = writeln!(
        out,
        r##"    <rect x="{ox:.2}" y="{oy:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="#cccccc"/>"##
    );
    let k = pair.0.len();
    let input: Vec<(f64, f64)> = pair.0.iter().enumerate().map(|(i, v)| (sx(i), sy(*v))).collect();
    let truth: Vec<(f64, f64)> = pair.1.iter().enumerate().map(|(i, v)| (sx(k + i), sy(*v))).collect();
    let guess: Vec<(f64, f64)> = pred.iter().enumerate().map(|(i, v)| (sx(k + i), sy(*v))).collect();
    polyline(out, &input, "#999999", r#" class="input""#);
    polyline(out, &truth, "#111111", r#" class="truth""#);
    polyline(out, &guess, "#d62728", r#" class="prediction" stroke-dasharray="4 2""#);
    let _ = writeln!(out, "  </g>");
}

/// SVG with the support pairs in the left column and the query pairs in the
/// right column. `predictions` holds one output window per pair, support first.
pub fn render_svg(episode: &Episode, predictions: &[Vec<f64>]) -> Result<String> {
    let pairs: Vec<&Pair> = episode.all_pairs().collect();
    if predictions.is_empty() {
        return Err(Error::dim("no predictions to plot"));
    }
    if predictions.len() != pairs.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} support and query pairs",
            predictions.len(),
            pairs.len()
        )));
    }
    for (i, (p, pair)) in predictions.iter().zip(&pairs).enumerate() {
        if p.len() != pair.1.len() {
            return Err(Error::dim(format!(
                "prediction {i} has {} samples, its target has {}",
                p.len(),
                pair.1.len()
            )));
        }
    }
    let values = pairs
        .iter()
        .flat_map(|p| p.0.iter().chain(&p.1))
        .chain(predictions.iter().flatten())
        .copied()
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let range = (lo - pad, hi + pad);

    let ns = episode.support.len();
    let rows = ns.max(episode.query.len());
    let width = 2.0 * PANEL_W + 3.0 * GAP;
    let height = TOP + rows as f64 * (PANEL_H + GAP);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"  <text x="{:.2}" y="20">support: adaptation (source {} to {})</text>"#,
        GAP, episode.source_i, episode.source_j
    );
    let _ = writeln!(out, r#"  <text x="{:.2}" y="20">query: prediction</text>"#, 2.0 * GAP + PANEL_W);
    for (i, pair) in pairs.iter().enumerate() {
        let (col, row, id) = if i < ns {
            (0.0, i, format!("support-{i}"))
        } else {
            (1.0, i - ns, format!("query-{}", i - ns))
        };
        let ox = GAP + col * (PANEL_W + GAP);
        let oy = TOP + row as f64 * (PANEL_H + GAP);
        panel(&mut out, &id, ox, oy, pair, &predictions[i], range);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plots(episode: &Episode, predictions: &[Vec<f64>], out: &Path) -> Result<()> {
    write_text(out, &render_svg(episode, predictions)?)
}
