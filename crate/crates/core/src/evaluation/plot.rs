//! Alignment/uniformity scatter plot as a standalone SVG document.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub label: String,
    pub alignment: f64,
    pub uniformity: f64,
    pub srocc: f64,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(1e-3);
    (lo - pad, hi + pad)
}

/// Uniformity on x, alignment on y (lower-left is better), each point
/// labelled with its name and SROCC.
pub fn scatter_svg(points: &[PlotPoint]) -> String {
    let (x0, x1) = range(points.iter().map(|p| p.uniformity));
    let (y0, y1) = range(points.iter().map(|p| p.alignment));
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">uniformity</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">alignment</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{v:.3}</text>"#, sx(v), b + 14.0);
    }
    for v in [y0, y1] {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, l - 4.0, sy(v));
    }
    for p in points {
        let (cx, cy) = (sx(p.uniformity), sy(p.alignment));
        let _ = writeln!(svg, r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="4" fill="#1f77b4"/>"##);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{} ({:.3})</text>"#,
            cx + 6.0,
            cy - 6.0,
            escape(&p.label),
            p.srocc
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_point() {
        let pts = vec![
            PlotPoint {
                label: "a<b".into(),
                alignment: 0.4,
                uniformity: -2.0,
                srocc: 0.61,
            },
            PlotPoint {
                label: "c".into(),
                alignment: 0.2,
                uniformity: -3.1,
                srocc: 0.72,
            },
        ];
        let svg = scatter_svg(&pts);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("a&lt;b (0.610)"));
        assert!(scatter_svg(&[]).ends_with("</svg>\n"));
    }
}
