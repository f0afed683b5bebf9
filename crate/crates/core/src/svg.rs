//! Minimal SVG figures: Bloch-sphere panels and the gap trace.

use std::fmt::Write;

use crate::qmath::BlochVector;
use crate::varopt::GapRecord;

const PANEL: f64 = 320.0;
const RADIUS: f64 = 120.0;

/// Orthographic view from azimuth 30 deg, elevation 20 deg. Returns screen
/// coordinates relative to the sphere center and a depth (positive = front).
fn project(v: BlochVector) -> (f64, f64, f64) {
    let (sa, ca) = 30f64.to_radians().sin_cos();
    let (se, ce) = 20f64.to_radians().sin_cos();
    let u = -v.x * sa + v.y * ca;
    let depth_h = v.x * ca + v.y * sa;
    let w = v.z * ce - depth_h * se;
    let depth = depth_h * ce + v.z * se;
    (u * RADIUS, -w * RADIUS, depth)
}

fn sphere(out: &mut String, cx: f64, cy: f64, title: &str) {
    let _ = write!(
        out,
        r##"<g transform="translate({cx},{cy})"><circle r="{RADIUS}" fill="none" stroke="#888"/>"##
    );
    for (pts, dash) in [(equator(), ""), (meridian(), r#" stroke-dasharray="3,3""#)] {
        let _ = write!(out, r##"<polyline fill="none" stroke="#bbb"{dash} points=""##);
        for (x, y) in pts {
            let _ = write!(out, "{x:.2},{y:.2} ");
        }
        out.push_str("\"/>");
    }
    for (label, v) in [("x", BlochVector::new(1., 0., 0.)), ("y", BlochVector::new(0., 1., 0.)), ("z", BlochVector::new(0., 0., 1.))] {
        let (x, y, _) = project(v);
        let _ = write!(
            out,
            r##"<line x1="0" y1="0" x2="{x:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" font-size="12">{label}</text>"##,
            x * 1.1,
            y * 1.1
        );
    }
    let _ = write!(out, r#"<text x="0" y="{:.1}" text-anchor="middle" font-size="14">{title}</text></g>"#, -RADIUS - 20.0);
}

fn circle_points(f: impl Fn(f64) -> BlochVector) -> Vec<(f64, f64)> {
    (0..=72)
        .map(|k| {
            let (x, y, _) = project(f(k as f64 * 5f64.to_radians()));
            (x, y)
        })
        .collect()
}

fn equator() -> Vec<(f64, f64)> {
    circle_points(|t| BlochVector::new(t.cos(), t.sin(), 0.0))
}

fn meridian() -> Vec<(f64, f64)> {
    circle_points(|t| BlochVector::new(t.cos(), 0.0, t.sin()))
}

const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn points(out: &mut String, cx: f64, cy: f64, vectors: &[BlochVector]) {
    for (i, v) in vectors.iter().enumerate() {
        let (x, y, depth) = project(*v);
        let color = COLORS[i % COLORS.len()];
        let opacity = if depth >= 0.0 { 1.0 } else { 0.45 };
        let _ = write!(
            out,
            r#"<line x1="{cx}" y1="{cy}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-opacity="{opacity}"/><circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" fill-opacity="{opacity}"><title>{}: ({:.3}, {:.3}, {:.3})</title></circle>"#,
            cx + x,
            cy + y,
            cx + x,
            cy + y,
            i + 1,
            v.x,
            v.y,
            v.z
        );
    }
}

/// Two Bloch spheres side by side with the same point set ordering.
pub fn bloch_panels(left_title: &str, left: &[BlochVector], right_title: &str, right: &[BlochVector]) -> String {
    let h = PANEL + 20.0;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = 2.0 * PANEL
    );
    let cy = PANEL / 2.0 + 20.0;
    for (k, (title, pts)) in [(left_title, left), (right_title, right)].into_iter().enumerate() {
        let cx = PANEL / 2.0 + k as f64 * PANEL;
        sphere(&mut out, cx, cy, title);
        points(&mut out, cx, cy, pts);
    }
    out.push_str("</svg>\n");
    out
}

/// Functional value and bound per iteration, with the gap shaded.
pub fn gap_trace(trace: &[GapRecord]) -> String {
    let (w, h, m) = (640.0, 360.0, 50.0);
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    if trace.is_empty() {
        out.push_str(r#"<text x="20" y="30">no iterations</text></svg>"#);
        out.push('\n');
        return out;
    }
    let lo = trace.iter().flat_map(|r| [r.eval, r.bound]).fold(f64::INFINITY, f64::min);
    let hi = trace.iter().flat_map(|r| [r.eval, r.bound]).fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let n = trace.len().max(2) - 1;
    let sx = |i: usize| m + (w - 2.0 * m) * i as f64 / n as f64;
    let sy = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / span;
    let _ = write!(
        out,
        r##"<line x1="{m}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000"/><line x1="{m}" y1="{m}" x2="{m}" y2="{y0}" stroke="#000"/>"##,
        y0 = h - m,
        x1 = w - m
    );
    let _ = write!(out, r#"<text x="{m}" y="{:.1}" font-size="11">{hi:.4}</text><text x="{m}" y="{:.1}" font-size="11">{lo:.4}</text>"#, m - 6.0, h - m + 14.0);
    for (key, color) in [("eval", "#1f77b4"), ("bound", "#d62728")] {
        let _ = write!(out, r#"<polyline fill="none" stroke="{color}" points=""#);
        for (i, r) in trace.iter().enumerate() {
            let v = if key == "eval" { r.eval } else { r.bound };
            let _ = write!(out, "{:.2},{:.2} ", sx(i), sy(v));
        }
        out.push_str("\"/>");
    }
    let _ = write!(
        out,
        r##"<text x="{:.1}" y="20" font-size="12" fill="#1f77b4">ideal value</text><text x="{:.1}" y="36" font-size="12" fill="#d62728">three-outcome bound</text>"##,
        w - 200.0,
        w - 200.0
    );
    out.push_str("</svg>\n");
    out
}
