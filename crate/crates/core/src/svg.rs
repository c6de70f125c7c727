//! Minimal self-contained SVG line plots.

use std::fmt::Write;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    /// Points are drawn as one polyline; `NaN` breaks the line.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed vertical markers with labels.
    pub verticals: Vec<(f64, String)>,
    /// Dotted horizontal markers with labels.
    pub horizontals: Vec<(f64, String)>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..=20).map(|k| first + k as f64 * step).take_while(|v| *v <= hi + 1e-9 * step).collect()
}

impl LinePlot {
    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range.unwrap_or_else(|| {
            extent(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)))
        });
        let (y0, y1) = self.y_range.unwrap_or_else(|| {
            extent(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)))
        });
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let inside = |x: f64, y: f64| x >= x0 && x <= x1 && y >= y0 && y <= y1;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for t in ticks(x0, x1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"#,
                sx(t),
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 19.0,
                label(t)
            );
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"#,
                LEFT - 5.0,
                sy(t),
                LEFT,
                LEFT - 8.0,
                sy(t) + 4.0,
                label(t)
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (x, name) in &self.verticals {
            if *x >= x0 && *x <= x1 {
                let _ = writeln!(
                    s,
                    r##"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="#888" stroke-dasharray="6 4"/><text x="{3:.2}" y="{4}" fill="#555">{5}</text>"##,
                    sx(*x),
                    TOP,
                    TOP + ph,
                    sx(*x) + 3.0,
                    TOP + 14.0,
                    escape(name)
                );
            }
        }
        for (y, name) in &self.horizontals {
            if *y >= y0 && *y <= y1 {
                let _ = writeln!(
                    s,
                    r##"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="#888" stroke-dasharray="2 3"/><text x="{3}" y="{4:.2}" fill="#555">{5}</text>"##,
                    LEFT,
                    sy(*y),
                    LEFT + pw,
                    LEFT + 4.0,
                    sy(*y) - 4.0,
                    escape(name)
                );
            }
        }
        for (k, series) in self.series.iter().enumerate() {
            let mut path = String::new();
            let mut pen_down = false;
            for &(x, y) in &series.points {
                if !(x.is_finite() && y.is_finite()) || !inside(x, y) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            }
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.6"/>"#, path.trim_end(), series.color);
            let ly = TOP + 16.0 + 16.0 * k as f64;
            let lx = LEFT + pw - 150.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{0}" x2="{1}" y2="{0}" stroke="{2}" stroke-width="2"/><text x="{3}" y="{4}">{5}</text>"#,
                ly - 4.0,
                lx + 20.0,
                series.color,
                lx + 25.0,
                ly,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let t = format!("{v:.4}");
        t.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_closed_document_with_markers() {
        let plot = LinePlot {
            title: "D & co".into(),
            series: vec![Series {
                label: "D".into(),
                color: "blue".into(),
                points: vec![(0.0, 0.0), (1.0, 1.0), (f64::NAN, 2.0), (2.0, 0.5)],
            }],
            verticals: vec![(1.5, "pole".into())],
            ..Default::default()
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("D &amp; co") && svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("M").count() >= 2, true);
    }
}
