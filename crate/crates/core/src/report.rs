//! Self-contained SVG plots and output-directory helpers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, x: (f64, f64), y: (f64, f64), xl: &str, yl: &str) {
    let (l, r, t, b) = PAD;
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - l - r,
        H - t - b
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let px = l + f * (W - l - r);
        let py = H - b - f * (H - t - b);
        let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{:.3}</text>"#, H - b + 16.0, x.0 + f * (x.1 - x.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, l - 4.0, py + 4.0, y.0 + f * (y.1 - y.0));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(xl));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(yl)
    );
}

/// Line plot of one or more series sharing the axes.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let x = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (l, r, t, b) = PAD;
    let map = |px: f64, py: f64| {
        (
            l + (px - x.0) / (x.1 - x.0) * (W - l - r),
            H - b - (py - y.0) / (y.1 - y.0) * (H - t - b),
        )
    };
    let mut s = String::new();
    header(&mut s, title);
    axes(&mut s, x, y, x_label, y_label);
    for (k, ser) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(a, b)| {
                let (u, v) = map(a, b);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for p in &pts {
            let (u, v) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{u}" cy="{v}" r="3" fill="{c}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
            W - r - 150.0,
            t + 16.0 + 14.0 * k as f64,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of `values[ix * ny + iy]` on `nx x ny` cells, coloured on a log10 scale.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, values: &[f64]) -> String {
    let logs: Vec<f64> = values.iter().map(|v| if *v > 0.0 { v.log10() } else { f64::NAN }).collect();
    let (lo, hi) = range(logs.iter().copied());
    let (l, r, t, b) = PAD;
    let cw = (W - l - r) / nx.max(1) as f64;
    let ch = (H - t - b) / ny.max(1) as f64;
    let mut s = String::new();
    header(&mut s, title);
    for ix in 0..nx {
        for iy in 0..ny {
            let v = logs.get(ix * ny + iy).copied().unwrap_or(f64::NAN);
            let fill = if v.is_finite() {
                let f = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                format!("rgb({},{},{})", (255.0 * f) as u8, (80.0 + 100.0 * (1.0 - f)) as u8, (255.0 * (1.0 - f)) as u8)
            } else {
                "#888888".into()
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                l + ix as f64 * cw,
                H - b - (iy + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3
            );
        }
    }
    axes(&mut s, x, y, x_label, y_label);
    let _ = writeln!(s, r#"<text x="{}" y="34" text-anchor="end">log10 range [{lo:.2}, {hi:.2}]</text>"#, W - r);
    s.push_str("</svg>\n");
    s
}

/// Writes `name` under `dir`, creating the directory.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, contents)?;
    Ok(p)
}
