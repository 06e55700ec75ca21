//! Minimal SVG line charts for sweep and trace outputs.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Base-10 logarithmic y axis; non-positive values are dropped.
    pub log_y: bool,
    pub series: Vec<Series>,
}

struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str, log_y: bool) -> Self {
        LinePlot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y,
            series: Vec::new(),
        }
    }

    pub fn add_series(&mut self, label: impl Into<String>, points: Vec<(f64, f64)>) {
        self.series.push(Series { label: label.into(), points });
    }

    fn transformed(&self, s: &Series) -> Vec<(f64, f64)> {
        s.points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
            .map(|&(x, y)| (x, if self.log_y { y.log10() } else { y }))
            .collect()
    }

    fn bounds(&self, data: &[Vec<(f64, f64)>]) -> Bounds {
        let mut b = Bounds {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in data.iter().flatten() {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        if !b.x0.is_finite() {
            return Bounds { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        if self.log_y {
            b.y0 = b.y0.floor();
            b.y1 = b.y1.ceil();
        }
        if b.x1 - b.x0 <= 0.0 {
            b.x0 -= 0.5;
            b.x1 += 0.5;
        }
        if b.y1 - b.y0 <= 0.0 {
            b.y0 -= 0.5;
            b.y1 += 0.5;
        }
        b
    }

    pub fn render(&self) -> String {
        let data: Vec<_> = self.series.iter().map(|s| self.transformed(s)).collect();
        let b = self.bounds(&data);
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - b.x0) / (b.x1 - b.x0) * pw;
        let sy = |y: f64| MARGIN_TOP + (1.0 - (y - b.y0) / (b.y1 - b.y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );

        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = b.x0 + t * (b.x1 - b.x0);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                MARGIN_TOP + ph + 16.0,
                tick(xv)
            );
        }
        let y_ticks: Vec<f64> = if self.log_y {
            let (lo, hi) = (b.y0 as i64, b.y1 as i64);
            let step = ((hi - lo) / 8).max(1);
            (lo..=hi).step_by(step as usize).map(|e| e as f64).collect()
        } else {
            (0..=4).map(|i| b.y0 + i as f64 / 4.0 * (b.y1 - b.y0)).collect()
        };
        for yv in y_ticks {
            let label = if self.log_y { format!("1e{}", yv as i64) } else { tick(yv) };
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
                MARGIN_LEFT + pw,
                y = sy(yv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
                MARGIN_LEFT - 6.0,
                sy(yv) + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, (s, pts)) in self.series.iter().zip(&data).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if !pts.is_empty() {
                let path: Vec<String> =
                    pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
            let lx = MARGIN_LEFT + pw + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
                lx + 18.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
