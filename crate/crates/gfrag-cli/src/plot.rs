//! Minimal static SVG plots: lines or markers on linear or log axes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, style: Style::Line }
    }

    pub fn points(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, style: Style::Points }
    }
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const L: f64 = 70.0;
const R: f64 = 20.0;
const T: f64 = 40.0;
const B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

impl Plot {
    pub fn new(title: &str, xlabel: &str, ylabel: &str, log_x: bool, log_y: bool) -> Self {
        Self { title: title.into(), xlabel: xlabel.into(), ylabel: ylabel.into(), log_x, log_y, series: Vec::new() }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn tx(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.log10()
        } else {
            y
        }
    }

    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| (!self.log_x || p.0 > 0.0) && (!self.log_y || p.1 > 0.0))
            .map(|p| (self.tx(p.0), self.ty(p.1)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &pts {
            x0 = x0.min(p.0);
            x1 = x1.max(p.0);
            y0 = y0.min(p.1);
            y1 = y1.max(p.1);
        }
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
        let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
        let mut o = String::new();
        let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(o, r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - L - R, H - T - B);
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let lx = if self.log_x { format!("1e{fx:.1}") } else { format!("{fx:.3}") };
            let ly = if self.log_y { format!("1e{fy:.1}") } else { format!("{fy:.3}") };
            let _ = writeln!(o, r#"<text x="{:.1}" y="{}" text-anchor="middle">{lx}</text>"#, sx(fx), H - B + 16.0);
            let _ = writeln!(o, r#"<text x="{}" y="{:.1}" text-anchor="end">{ly}</text>"#, L - 4.0, sy(fy) + 4.0);
        }
        let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(&self.xlabel));
        let _ = writeln!(o, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, H / 2.0, H / 2.0, esc(&self.ylabel));
        for (k, s) in self.series.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            let mapped: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|p| (!self.log_x || p.0 > 0.0) && (!self.log_y || p.1 > 0.0))
                .map(|p| (sx(self.tx(p.0)), sy(self.ty(p.1))))
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .collect();
            match s.style {
                Style::Line => {
                    let d: Vec<String> = mapped.iter().map(|p| format!("{:.1},{:.1}", p.0, p.1)).collect();
                    let _ = writeln!(o, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, d.join(" "));
                }
                Style::Points => {
                    for p in &mapped {
                        let _ = writeln!(o, r#"<circle cx="{:.1}" cy="{:.1}" r="2" fill="{c}"/>"#, p.0, p.1);
                    }
                }
            }
            let _ = writeln!(o, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, L + 10.0, T + 16.0 + 14.0 * k as f64, esc(&s.name));
        }
        o.push_str("</svg>\n");
        o
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Empirical survival function `(x, P(X > x))` on the top `keep` values.
pub fn survival_points(samples: &[f64], keep: usize) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let n = samples.len() as f64;
    let step = (v.len().min(keep) / 400).max(1);
    v.iter().take(keep).enumerate().step_by(step).map(|(k, x)| (*x, (k + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_document() {
        let p = Plot::new("t<1>", "x", "y", true, true).with_series(Series::line("a", vec![(1.0, 1.0), (10.0, 0.1)])).with_series(Series::points("b", vec![(0.0, 1.0)]));
        let s = p.render();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("t&lt;1&gt;"));
        assert!(s.contains("polyline"));
    }

    #[test]
    fn survival_of_uniform_grid() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = survival_points(&x, 3);
        assert_eq!(s, vec![(10.0, 0.1), (9.0, 0.2), (8.0, 0.3)]);
    }
}
