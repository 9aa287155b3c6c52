//! Minimal SVG output: line charts, box summaries and path overlays.

use std::fmt::Write;

use crate::terrain::TerrainGrid;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, x_label: &str, y_label: &str, b: (f64, f64, f64, f64)) {
    let (x0, x1, y0, y1) = b;
    let _ = writeln!(
        out,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD / 2.0
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let px = PAD + f * (W - 1.5 * PAD);
        let py = H - PAD - f * (H - 2.0 * PAD);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{:.3}</text>"#, H - PAD + 16.0, x0 + f * (x1 - x0));
        let _ = writeln!(out, r#"<text x="{}" y="{py:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{:.3}</text>"#, PAD - 4.0, y0 + f * (y1 - y0));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn project(b: (f64, f64, f64, f64), x: f64, y: f64) -> (f64, f64) {
    let (x0, x1, y0, y1) = b;
    (
        PAD + (x - x0) / (x1 - x0) * (W - 1.5 * PAD),
        H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD),
    )
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let b = bounds(series.iter().flat_map(|s| s.points.iter()));
    let b = (b.0, b.1, b.2.min(0.0), b.3);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label, b);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| {
                let (px, py) = project(b, x, y);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="{c}" stroke-width="2" fill="none"/>"#, pts.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{c}" font-family="sans-serif">{}</text>"#,
            W - 1.5 * PAD - 80.0,
            PAD + 16.0 * i as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Five-number summary per group: `(label, [min, q1, median, q3, max])`.
pub fn box_chart(title: &str, y_label: &str, groups: &[(String, [f64; 5])]) -> String {
    let pts: Vec<(f64, f64)> = groups.iter().enumerate().flat_map(|(i, g)| g.1.iter().map(move |&v| (i as f64, v))).collect();
    let b0 = bounds(pts.iter());
    let b = (-0.5, groups.len() as f64 - 0.5, b0.2.min(0.0), b0.3);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "", y_label, b);
    for (i, (label, q)) in groups.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let (x, _) = project(b, i as f64, 0.0);
        let y = |v: f64| project(b, 0.0, v).1;
        let _ = writeln!(out, r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{c}"/>"#, y(q[0]), y(q[4]));
        let _ = writeln!(out, r#"<rect x="{:.1}" y="{:.1}" width="30" height="{:.1}" fill="white" stroke="{c}"/>"#, x - 15.0, y(q[3]), (y(q[1]) - y(q[3])).max(0.5));
        let _ = writeln!(out, r#"<line x1="{:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="{c}" stroke-width="2"/>"#, x - 15.0, x + 15.0, y(q[2]), y(q[2]));
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#, H - PAD + 30.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path2 {
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub width: f64,
}

/// Blue to red ramp for `t` in `[0, 1]`.
pub fn ramp_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    format!("rgb({},{},{})", (255.0 * t) as u8, 40, (255.0 * (1.0 - t)) as u8)
}

/// Top-down view of `grid` (gray by height) with paths and markers in world
/// coordinates.
pub fn path_overlay(title: &str, grid: Option<&TerrainGrid>, paths: &[Path2], markers: &[((f64, f64), &str)]) -> String {
    let b = match grid {
        Some(g) => {
            let (w, h) = g.extent();
            (0.0, w, 0.0, h)
        }
        None => bounds(paths.iter().flat_map(|p| p.points.iter()).chain(markers.iter().map(|m| &m.0))),
    };
    let mut out = String::new();
    header(&mut out, title);
    if let Some(g) = grid {
        let step = (g.width.max(g.height) / 100).max(1);
        let top = g.max_height().max(1e-6);
        let cell = g.cell_size * step as f64;
        for j in (0..g.height).step_by(step) {
            for i in (0..g.width).step_by(step) {
                let v = g.get(i, j);
                if v <= 1e-9 {
                    continue;
                }
                let (x, y) = g.cell_center(i, j);
                let (px, py) = project(b, x - g.cell_size / 2.0, y - g.cell_size / 2.0 + cell);
                let (qx, qy) = project(b, x - g.cell_size / 2.0 + cell, y - g.cell_size / 2.0);
                let s = (200.0 * (1.0 - (v / top).clamp(0.0, 1.0))) as u8 + 30;
                let _ = writeln!(out, r#"<rect x="{px:.1}" y="{py:.1}" width="{:.2}" height="{:.2}" fill="rgb({s},{s},{s})"/>"#, qx - px, qy - py);
            }
        }
    }
    for p in paths {
        let pts: Vec<String> = p
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = project(b, x, y);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="{}" stroke-width="{}" fill="none" opacity="0.8"/>"#, pts.join(" "), p.color, p.width);
    }
    for ((x, y), color) in markers {
        let (px, py) = project(b, *x, *y);
        let _ = writeln!(out, r#"<circle cx="{px:.1}" cy="{py:.1}" r="5" fill="{color}"/>"#);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = line_chart(
            "err",
            "step",
            "m",
            &[Series {
                label: "a<b".into(),
                points: vec![(1.0, 0.1), (2.0, 0.3)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        let b = box_chart("q", "m", &[("x".into(), [0.0, 1.0, 2.0, 3.0, 4.0])]);
        assert!(b.contains("<rect"));
        let p = path_overlay("p", None, &[Path2 { points: vec![(0.0, 0.0), (1.0, 1.0)], color: ramp_color(0.5), width: 1.0 }], &[((1.0, 1.0), "green")]);
        assert!(p.contains("<polyline") && p.contains("<circle"));
        assert_eq!(line_chart("t", "x", "y", &[]), line_chart("t", "x", "y", &[]));
    }
}
