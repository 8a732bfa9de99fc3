//! Self-contained SVG line plots with a logarithmic x-axis.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// A polyline of `(x, y)` points with a reference line at `y = reference`.
pub struct LogXPlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: &'a [(f64, f64)],
    pub reference: Option<f64>,
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

impl LogXPlot<'_> {
    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .copied()
            .filter(|(x, y)| *x > 0.0 && x.is_finite() && y.is_finite())
            .collect();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(self.title)
        );
        if pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#,
                W / 2.0,
                H / 2.0
            );
            s.push_str("</svg>\n");
            return s;
        }
        let lx: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
        let mut x0 = lx.iter().cloned().fold(f64::INFINITY, f64::min).floor();
        let mut x1 = lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil();
        if x1 <= x0 {
            x0 -= 1.0;
            x1 += 1.0;
        }
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if let Some(r) = self.reference {
            ys.push(r);
        }
        let (mut y0, mut y1) = (
            ys.iter().cloned().fold(f64::INFINITY, f64::min),
            ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        let pad = ((y1 - y0) * 0.1).max(1e-3);
        y0 -= pad;
        y1 += pad;
        let px = |lx: f64| MARGIN + (lx - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let _ = writeln!(
            s,
            r#"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for e in (x0 as i64)..=(x1 as i64) {
            let x = px(e as f64);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{t}" stroke="#ddd"/><text x="{x:.2}" y="{ty}" text-anchor="middle">1e{e}</text>"##,
                b = H - MARGIN,
                t = MARGIN,
                ty = H - MARGIN + 16.0
            );
        }
        for i in 0..=4 {
            let y = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{yy:.2}" text-anchor="end">{label}</text>"#,
                x = MARGIN - 6.0,
                yy = py(y) + 4.0,
                label = fmt_num(y)
            );
        }
        if let Some(r) = self.reference {
            let _ = writeln!(
                s,
                r##"<line x1="{l}" y1="{y:.2}" x2="{rr}" y2="{y:.2}" stroke="#888" stroke-dasharray="4 4"/>"##,
                l = MARGIN,
                rr = W - MARGIN,
                y = py(r)
            );
        }
        let path: Vec<String> = pts
            .iter()
            .zip(&lx)
            .map(|(p, &l)| format!("{:.2},{:.2}", px(l), py(p.1)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="2"/>"##,
            path.join(" ")
        );
        for (p, &l) in pts.iter().zip(&lx) {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#1f5fbf"/>"##,
                px(l),
                py(p.1)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 14.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(self.y_label)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_points_and_reference() {
        let pts = [(100.0, 1.12), (1000.0, 0.98), (10000.0, 0.99)];
        let svg = LogXPlot {
            title: "R(α)",
            x_label: "α",
            y_label: "R",
            points: &pts,
            reference: Some(1.0),
        }
        .to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("1e2") && svg.contains("1e4"));
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn empty_plot() {
        let svg = LogXPlot {
            title: "x",
            x_label: "a",
            y_label: "b",
            points: &[],
            reference: None,
        }
        .to_svg();
        assert!(svg.contains("no data"));
    }
}
