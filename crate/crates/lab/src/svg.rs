//! Minimal SVG line charts with linear or log axes.

use std::fmt::Write;

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
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub notes: Vec<String>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    fn transform(&self, (x, y): (f64, f64)) -> Option<(f64, f64)> {
        let x = if self.log_x { (x > 0.0).then(|| x.log10())? } else { x };
        let y = if self.log_y { (y > 0.0).then(|| y.log10())? } else { y };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let data: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| s.points.iter().filter_map(|&p| self.transform(p)).collect())
            .collect();
        let all: Vec<(f64, f64)> = data.iter().flatten().copied().collect();
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let _ = writeln!(
            out,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        if all.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#,
                LEFT + pw / 2.0,
                TOP + ph / 2.0
            );
        } else {
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for &(x, y) in &all {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            if x1 - x0 < 1e-12 {
                x0 -= 0.5;
                x1 += 0.5;
            }
            if y1 - y0 < 1e-12 {
                y0 -= 0.5;
                y1 += 0.5;
            }
            let pad = 0.05 * (y1 - y0);
            let (y0, y1) = (y0 - pad, y1 + pad);
            let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
            let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
            for i in 0..=4 {
                let f = i as f64 / 4.0;
                let (vx, vy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
                let lx = if self.log_x { 10f64.powf(vx) } else { vx };
                let ly = if self.log_y { 10f64.powf(vy) } else { vy };
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    sx(vx),
                    TOP + ph + 16.0,
                    tick(lx)
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                    LEFT - 6.0,
                    sy(vy) + 4.0,
                    tick(ly)
                );
            }
            for (k, (series, pts)) in self.series.iter().zip(&data).enumerate() {
                if pts.is_empty() {
                    continue;
                }
                let color = PALETTE[k % PALETTE.len()];
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
                if pts.len() == 1 {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        sx(pts[0].0),
                        sy(pts[0].1)
                    );
                } else {
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                        path.join(" ")
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
                    LEFT + 10.0,
                    TOP + 16.0 + 15.0 * k as f64,
                    escape(&series.label)
                );
            }
        }
        for (i, note) in self.notes.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                WIDTH - RIGHT - 8.0,
                TOP + ph - 10.0 - 15.0 * i as f64,
                escape(note)
            );
        }
        let axis = |log: bool, label: &str| {
            if log {
                format!("{label} (log)")
            } else {
                label.to_string()
            }
        };
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&axis(self.log_x, &self.x_label))
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&axis(self.log_y, &self.y_label))
        );
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
