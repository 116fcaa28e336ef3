//! Minimal static SVG line plots.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

impl Axis {
    fn map(self, v: f64) -> f64 {
        match self {
            Axis::Linear => v,
            Axis::Log => v.log10(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];
const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(axis: Axis, v: f64) -> String {
    match axis {
        Axis::Log => format!("1e{}", v.round() as i64),
        Axis::Linear => format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string(),
    }
}

fn ticks(axis: Axis, lo: f64, hi: f64) -> Vec<f64> {
    match axis {
        Axis::Log => {
            let (a, b) = (lo.floor() as i64, hi.ceil() as i64);
            (a..=b).map(|k| k as f64).filter(|&k| k >= lo - 1e-9 && k <= hi + 1e-9).collect()
        }
        Axis::Linear => (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect(),
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let usable = |axis: Axis, v: f64| v.is_finite() && (axis == Axis::Linear || v > 0.0);
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&(x, y)| usable(self.x_axis, x) && usable(self.y_axis, y))
            .map(|(x, y)| (self.x_axis.map(x), self.y_axis.map(y)))
            .collect();
        let range = |vals: Vec<f64>| {
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = range(pts.iter().map(|p| p.0).collect());
        let (y0, y1) = range(pts.iter().map(|p| p.1).collect());
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for t in ticks(self.x_axis, x0, x1) {
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{TOP}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"##,
                H - BOTTOM,
                H - BOTTOM + 16.0,
                tick_label(self.x_axis, t)
            );
        }
        for t in ticks(self.y_axis, y0, y1) {
            let y = py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                W - RIGHT,
                LEFT - 6.0,
                y + 4.0,
                tick_label(self.y_axis, t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            H - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (TOP + H - BOTTOM) / 2.0,
            (TOP + H - BOTTOM) / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let coords: Vec<String> = series
                .points
                .iter()
                .filter(|&&(x, y)| usable(self.x_axis, x) && usable(self.y_axis, y))
                .map(|&(x, y)| format!("{:.1},{:.1}", px(self.x_axis.map(x)), py(self.y_axis.map(y))))
                .collect();
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                coords.join(" ")
            );
            if !series.dashed {
                for c in &coords {
                    let (cx, cy) = c.split_once(',').unwrap();
                    let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = TOP + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                LEFT + 10.0,
                LEFT + 34.0,
                LEFT + 40.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Guide line `c · h^slope` through the last point of `anchor`.
pub fn guide_line(anchor: &[(f64, f64)], slope: f64) -> Vec<(f64, f64)> {
    let Some(&(h_ref, e_ref)) = anchor.last() else {
        return Vec::new();
    };
    anchor
        .iter()
        .map(|&(h, _)| (h, e_ref * (h / h_ref).powf(slope)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let pts = vec![(0.125, 0.1), (0.0625, 0.05), (0.03125, 0.026)];
        let plot = Plot {
            title: "err <h>".into(),
            x_label: "h".into(),
            y_label: "error".into(),
            x_axis: Axis::Log,
            y_axis: Axis::Log,
            series: vec![Series::new("scheme", pts.clone()), Series::new("guide", guide_line(&pts, 1.0)).dashed()],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("err &lt;h&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
