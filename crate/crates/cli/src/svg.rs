//! Static SVG plots: scatter and line primitives only.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, anchor_x) in [(f.x0, PAD), (f.x1, W - PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{v:.3}</text>"#,
            H - PAD + 16.0
        );
    }
    for (v, anchor_y) in [(f.y0, H - PAD), (f.y1, PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor_y}" text-anchor="end">{v:.3}</text>"#,
            PAD - 4.0
        );
    }
    s
}

fn legend(s: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = PAD + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="4" fill="{}"/>"#,
            W - PAD - 110.0,
            y - 4.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, W - PAD - 100.0, escape(n));
    }
}

/// One colour per distinct `group` label.
pub fn scatter(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64, String)]) -> String {
    let f = Frame::fit(points.iter().map(|p| p.0), points.iter().map(|p| p.1));
    let mut groups: Vec<String> = points.iter().map(|p| p.2.clone()).collect();
    groups.sort();
    groups.dedup();
    let mut s = open(title, xlabel, ylabel, &f);
    for (x, y, g) in points {
        let c = groups.iter().position(|k| k == g).unwrap_or(0);
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
            f.px(*x),
            f.py(*y),
            PALETTE[c % PALETTE.len()]
        );
    }
    legend(&mut s, &groups);
    s.push_str("</svg>\n");
    s
}

/// Polyline through `(x, mean)` with vertical `±err` bars.
pub fn line_with_errors(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64, f64)]) -> String {
    let f = Frame::fit(pts.iter().map(|p| p.0), pts.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
    let mut s = open(title, xlabel, ylabel, &f);
    let path: Vec<String> = pts
        .iter()
        .map(|(x, y, _)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
        path.join(" "),
        PALETTE[0]
    );
    for (x, y, e) in pts {
        let (px, lo, hi) = (f.px(*x), f.py(y - e), f.py(y + e));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{:.2}" r="3.5" fill="{}"/>"#,
            f.py(*y),
            PALETTE[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_has_one_circle_per_point_plus_legend() {
        let pts = vec![
            (0.0, 1.0, "a".to_string()),
            (1.0, 0.0, "b".into()),
            (0.5, 0.5, "a".into()),
        ];
        let s = scatter("t", "x", "y", &pts);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 3 + 2);
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let s = line_with_errors("t", "x", "y", &[(0.0, 1.0, 0.0)]);
        assert!(!s.contains("NaN") && !s.contains("inf"));
        let s = scatter("t", "x", "y", &[]);
        assert!(!s.contains("NaN"));
    }

    #[test]
    fn labels_are_escaped() {
        assert!(scatter("a<b", "x", "y", &[]).contains("a&lt;b"));
    }
}
