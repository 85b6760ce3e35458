//! Phase-space biomarker features and portrait rendering.
//!
//! A portrait is the (displacement, velocity) trace of one fold. Cycles are
//! delimited by upward zero-crossings of the displacement with linear
//! interpolation, which is robust to the transient before limit-cycle lock.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fold::TrajectorySet;

/// Which fold of a trajectory to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fold {
    Left,
    Right,
}

/// Chronological (x, v) pairs for one fold. For the one-mass model these are
/// columns (0, 1) / (2, 3); for the two-mass model the lower mass is used.
pub fn phase_portrait(traj: &TrajectorySet, fold: Fold) -> Vec<(f64, f64)> {
    assert!(traj.len() >= 2, "portrait needs at least 2 steps");
    let base = match (fold, traj.dim()) {
        (Fold::Left, _) => 0,
        (Fold::Right, 4) => 2,
        (Fold::Right, 8) => 4,
        (Fold::Right, d) => panic!("unsupported state dimension {d}"),
    };
    (0..traj.len())
        .map(|i| (traj.states.get(i, base), traj.states.get(i, base + 1)))
        .collect()
}

/// Absolute shoelace area of a closed polygon.
pub fn polygon_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Indices just after each upward zero-crossing of x, with the interpolated
/// crossing point itself. Consecutive entries delimit one full cycle.
fn upward_crossings(points: &[(f64, f64)]) -> Vec<(usize, (f64, f64))> {
    let mut out = Vec::new();
    for i in 0..points.len().saturating_sub(1) {
        let (x0, v0) = points[i];
        let (x1, v1) = points[i + 1];
        if x0 < 0.0 && x1 >= 0.0 {
            let t = x0 / (x0 - x1);
            out.push((i + 1, (0.0, v0 + t * (v1 - v0))));
        }
    }
    out
}

/// Cycle polygons in a portrait: points between consecutive upward
/// zero-crossings, with the interpolated crossing points as endpoints.
fn cycles(points: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    let crossings = upward_crossings(points);
    let mut out = Vec::new();
    for w in crossings.windows(2) {
        let (start_idx, start_pt) = w[0];
        let (end_idx, end_pt) = w[1];
        let mut poly = Vec::with_capacity(end_idx - start_idx + 2);
        poly.push(start_pt);
        poly.extend_from_slice(&points[start_idx..end_idx]);
        poly.push(end_pt);
        out.push(poly);
    }
    out
}

/// Shoelace area of the last full cycle within the portrait tail.
pub fn limit_cycle_area(portrait: &[(f64, f64)], tail_fraction: f64) -> Result<f64> {
    assert!(
        tail_fraction > 0.0 && tail_fraction <= 1.0,
        "tail_fraction in (0, 1]"
    );
    let skip = ((1.0 - tail_fraction) * portrait.len() as f64).floor() as usize;
    let tail = &portrait[skip.min(portrait.len())..];
    let cycles = cycles(tail);
    match cycles.last() {
        Some(cycle) => Ok(polygon_area(cycle)),
        None => Err(Error::NoCycleDetected),
    }
}

/// Left-right imbalance of a one-mass trajectory over its last half:
/// RMS(x_l - x_r) / (RMS(x_l) + RMS(x_r) + 1e-12).
pub fn asymmetry_index(traj: &TrajectorySet) -> f64 {
    assert_eq!(traj.dim(), 4, "asymmetry_index expects a one-mass trajectory");
    let from = traj.len() / 2;
    let mut diff = 0.0;
    let mut left = 0.0;
    let mut right = 0.0;
    let n = (traj.len() - from) as f64;
    for i in from..traj.len() {
        let xl = traj.states.get(i, 0);
        let xr = traj.states.get(i, 2);
        diff += (xl - xr) * (xl - xr);
        left += xl * xl;
        right += xr * xr;
    }
    (diff / n).sqrt() / ((left / n).sqrt() + (right / n).sqrt() + 1e-12)
}

fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

fn diameter(points: &[(f64, f64)]) -> f64 {
    let mut d = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            d = d.max(((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt());
        }
    }
    d
}

/// Mean Hausdorff distance between consecutive cycle polygons, normalized
/// by the mean cycle diameter. Zero for a perfectly repeating orbit.
pub fn cycle_variability(portrait: &[(f64, f64)]) -> Result<f64> {
    let cycles = cycles(portrait);
    if cycles.len() < 2 {
        return Err(Error::NoCycleDetected);
    }
    let mut dist = 0.0;
    for w in cycles.windows(2) {
        dist += hausdorff(&w[0], &w[1]);
    }
    dist /= (cycles.len() - 1) as f64;
    let diam =
        cycles.iter().map(|c| diameter(c)).sum::<f64>() / cycles.len() as f64;
    if diam <= 0.0 {
        return Ok(0.0);
    }
    Ok(dist / diam)
}

/// A labelled portrait for rendering.
#[derive(Debug, Clone)]
pub struct PortraitPlot {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const SVG_MARGIN: f64 = 48.0;

/// Render phase portraits as a standalone SVG: one polyline per portrait,
/// axes and a legend. Output bytes are deterministic for identical input.
pub fn render_svg(portraits: &[PortraitPlot], path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg_string(portraits);
    let mut f = std::fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

pub fn render_svg_string(portraits: &[PortraitPlot]) -> String {
    assert!(!portraits.is_empty(), "need at least one portrait");
    let all = portraits.iter().flat_map(|p| p.points.iter());
    let (mut xmin, mut xmax, mut ymin, mut ymax) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !(xmax > xmin) {
        xmax = xmin + 1.0;
    }
    if !(ymax > ymin) {
        ymax = ymin + 1.0;
    }
    let pad_x = 0.05 * (xmax - xmin);
    let pad_y = 0.05 * (ymax - ymin);
    xmin -= pad_x;
    xmax += pad_x;
    ymin -= pad_y;
    ymax += pad_y;

    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            SVG_MARGIN + (x - xmin) / (xmax - xmin) * (SVG_W - 2.0 * SVG_MARGIN),
            SVG_H - SVG_MARGIN - (y - ymin) / (ymax - ymin) * (SVG_H - 2.0 * SVG_MARGIN),
        )
    };

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    ));

    // axes through the data box edges with value labels
    let (x0, y0) = to_px(xmin, ymin);
    let (x1, y1) = to_px(xmax, ymax);
    s.push_str(&format!(
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n"
    ));
    s.push_str(&format!(
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>\n"
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>\n",
        x0, y0 + 16.0, xmin
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>\n",
        x1 - 24.0, y0 + 16.0, xmax
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>\n",
        x0 - 40.0, y0, ymin
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>\n",
        x0 - 40.0, y1 + 4.0, ymax
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">displacement x</text>\n",
        (x0 + x1) / 2.0 - 40.0,
        y0 + 32.0
    ));
    s.push_str(&format!(
        "  <text x=\"14\" y=\"{:.2}\" font-size=\"12\" transform=\"rotate(-90 14 {:.2})\">velocity v</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));

    for (i, p) in portraits.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let pts: Vec<String> = p
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.3},{py:.3}")
            })
            .collect();
        s.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"/>\n",
            color,
            pts.join(" ")
        ));
        // legend entry
        let ly = 20.0 + 16.0 * i as f64;
        s.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            SVG_W - 150.0,
            SVG_W - 130.0,
            color
        ));
        s.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            SVG_W - 124.0,
            ly + 4.0,
            p.label
        ));
    }
    s.push_str("</svg>\n");
    s
}
