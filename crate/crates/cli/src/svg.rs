//! Minimal self-contained SVG plotting: line/marker charts with linear or
//! logarithmic axes, and grouped bar charts. Output is deterministic — no
//! timestamps, no randomness — so plot files are byte-stable across runs.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const W: f64 = 720.0;
const H: f64 = 480.0;
const ML: f64 = 78.0;
const MR: f64 = 24.0;
const MT: f64 = 46.0;
const MB: f64 = 58.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// SVG dash pattern, e.g. "6,4"; None for a solid line.
    pub dash: Option<&'static str>,
    /// Draw circle markers at every point.
    pub markers: bool,
    /// Connect points with a polyline.
    pub line: bool,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn line(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), color, dash: None, markers: false, line: true, points }
    }

    pub fn dashed(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), color, dash: Some("6,4"), markers: false, line: true, points }
    }

    pub fn scatter(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), color, dash: None, markers: true, line: false, points }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    /// Y range override (used e.g. to pin probability axes to [0, 1]).
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Chart {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_log: false,
            y_log: false,
            y_range: None,
            series: Vec::new(),
        }
    }

    fn visible(&self, (x, y): (f64, f64)) -> bool {
        x.is_finite() && y.is_finite() && (!self.x_log || x > 0.0) && (!self.y_log || y > 0.0)
    }

    /// Render to an SVG document, or None when no series has plottable data.
    pub fn render(&self) -> Option<String> {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|p| self.visible(*p))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let (mut x0, mut x1) = min_max(pts.iter().map(|p| p.0));
        let (mut y0, mut y1) = min_max(pts.iter().map(|p| p.1));
        if let Some((lo, hi)) = self.y_range {
            (y0, y1) = (lo, hi);
        }
        expand_range(&mut x0, &mut x1, self.x_log);
        expand_range(&mut y0, &mut y1, self.y_log);

        let xmap = AxisMap::new(x0, x1, self.x_log, ML, W - MR);
        // SVG y grows downward.
        let ymap = AxisMap::new(y0, y1, self.y_log, H - MB, MT);

        let mut out = String::new();
        svg_open(&mut out);
        self.draw_frame(&mut out, &xmap, &ymap);
        for s in &self.series {
            let mapped: Vec<(f64, f64)> = s
                .points
                .iter()
                .copied()
                .filter(|p| self.visible(*p))
                .map(|(x, y)| (xmap.map(x), ymap.map(y)))
                .collect();
            if mapped.is_empty() {
                continue;
            }
            if s.line && mapped.len() > 1 {
                let d: Vec<String> = mapped.iter().map(|(x, y)| format!("{:.2},{:.2}", x, y)).collect();
                let dash = s.dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{} points=\"{}\"/>",
                    s.color,
                    dash,
                    d.join(" ")
                );
            }
            if s.markers {
                for (x, y) in &mapped {
                    let _ = writeln!(
                        out,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.6\" fill=\"{}\"/>",
                        x, y, s.color
                    );
                }
            }
        }
        self.draw_legend(&mut out);
        out.push_str("</svg>\n");
        Some(out)
    }

    fn draw_frame(&self, out: &mut String, xmap: &AxisMap, ymap: &AxisMap) {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-weight=\"bold\">{}</text>",
            (ML + W - MR) / 2.0,
            escape(&self.title)
        );
        for (v, label) in xmap.ticks() {
            let x = xmap.map(v);
            let _ = writeln!(
                out,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
                MT,
                H - MB
            );
            let _ = writeln!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{label}</text>",
                H - MB + 16.0
            );
        }
        for (v, label) in ymap.ticks() {
            let y = ymap.map(v);
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>",
                ML,
                W - MR
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{label}</text>",
                ML - 6.0,
                y + 3.5
            );
        }
        frame_and_axis_labels(out, &self.x_label, &self.y_label);
    }

    fn draw_legend(&self, out: &mut String) {
        let entries: Vec<&Series> = self.series.iter().filter(|s| !s.label.is_empty()).collect();
        if entries.is_empty() {
            return;
        }
        let lh = 16.0;
        let box_w = 8.0 * entries.iter().map(|s| s.label.len()).max().unwrap_or(4) as f64 + 40.0;
        let box_h = lh * entries.len() as f64 + 8.0;
        let bx = W - MR - box_w - 6.0;
        let by = MT + 6.0;
        let _ = writeln!(
            out,
            "<rect x=\"{bx:.1}\" y=\"{by:.1}\" width=\"{box_w:.1}\" height=\"{box_h:.1}\" fill=\"white\" fill-opacity=\"0.85\" stroke=\"#999999\"/>"
        );
        for (i, s) in entries.iter().enumerate() {
            let y = by + 12.0 + lh * i as f64;
            if s.line {
                let dash = s.dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"1.8\"{}/>",
                    bx + 6.0,
                    bx + 28.0,
                    s.color,
                    dash
                );
            }
            if s.markers {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"2.6\" fill=\"{}\"/>",
                    bx + 17.0,
                    s.color
                );
            }
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
                bx + 34.0,
                y + 3.5,
                escape(&s.label)
            );
        }
    }
}

/// Grouped bar chart: one cluster per group, one bar per series member.
pub fn grouped_bars(
    title: &str,
    y_label: &str,
    group_labels: &[String],
    series: &[(String, Vec<f64>)],
) -> Option<String> {
    if group_labels.is_empty() || series.is_empty() {
        return None;
    }
    let max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    if max <= 0.0 {
        return None;
    }
    let ymap = AxisMap::new(0.0, max * 1.12, false, H - MB, MT);
    let plot_w = W - ML - MR;
    let group_w = plot_w / group_labels.len() as f64;
    let bar_w = (group_w * 0.78) / series.len() as f64;

    let mut out = String::new();
    svg_open(&mut out);
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-weight=\"bold\">{}</text>",
        (ML + W - MR) / 2.0,
        escape(title)
    );
    for (v, label) in ymap.ticks() {
        let y = ymap.map(v);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>",
            ML,
            W - MR
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{label}</text>",
            ML - 6.0,
            y + 3.5
        );
    }
    for (g, glabel) in group_labels.iter().enumerate() {
        let gx = ML + group_w * (g as f64 + 0.5);
        let _ = writeln!(
            out,
            "<text x=\"{gx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            H - MB + 18.0,
            escape(glabel)
        );
        for (s, (_, values)) in series.iter().enumerate() {
            let Some(&v) = values.get(g) else { continue };
            if !v.is_finite() {
                continue;
            }
            let x = gx - (series.len() as f64 * bar_w) / 2.0 + s as f64 * bar_w;
            let y = ymap.map(v);
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x,
                y,
                bar_w - 1.5,
                (H - MB) - y,
                PALETTE[s % PALETTE.len()]
            );
        }
    }
    frame_and_axis_labels(&mut out, "", y_label);
    // Legend under the title, horizontal.
    let mut lx = ML + 4.0;
    for (s, (label, _)) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
            MT - 14.0,
            PALETTE[s % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
            lx + 14.0,
            MT - 5.0,
            escape(label)
        );
        lx += 22.0 + 7.0 * label.len() as f64;
    }
    out.push_str("</svg>\n");
    Some(out)
}

// ---------------------------------------------------------------------------
// Axis machinery
// ---------------------------------------------------------------------------

struct AxisMap {
    lo: f64,
    hi: f64,
    log: bool,
    pix_lo: f64,
    pix_hi: f64,
}

impl AxisMap {
    fn new(lo: f64, hi: f64, log: bool, pix_lo: f64, pix_hi: f64) -> AxisMap {
        AxisMap { lo, hi, log, pix_lo, pix_hi }
    }

    fn map(&self, v: f64) -> f64 {
        let t = if self.log {
            (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        };
        self.pix_lo + t.clamp(0.0, 1.0) * (self.pix_hi - self.pix_lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let k0 = self.lo.log10().ceil() as i32;
            let k1 = self.hi.log10().floor() as i32;
            (k0..=k1).map(|k| {
                let v = 10f64.powi(k);
                (v, fmt_num(v))
            }).collect()
        } else {
            let step = nice_step(self.hi - self.lo);
            let mut v = (self.lo / step).ceil() * step;
            let mut out = Vec::new();
            while v <= self.hi + step * 1e-9 {
                let clean = (v / step).round() * step;
                out.push((clean, fmt_num(clean)));
                v += step;
            }
            out
        }
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let factor = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * mag
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_owned()
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn expand_range(lo: &mut f64, hi: &mut f64, log: bool) {
    if log {
        // Widen to full decades for clean tick placement.
        *lo = 10f64.powf(lo.log10().floor());
        *hi = 10f64.powf(hi.log10().ceil());
        if *lo == *hi {
            *hi *= 10.0;
        }
    } else {
        let pad = ((*hi - *lo) * 0.05).max(1e-12);
        *lo -= pad;
        *hi += pad;
    }
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"Helvetica, Arial, sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
}

fn frame_and_axis_labels(out: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        W - ML - MR,
        H - MT - MB
    );
    if !x_label.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
            (ML + W - MR) / 2.0,
            H - 14.0,
            escape(x_label)
        );
    }
    if !y_label.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
            (MT + H - MB) / 2.0,
            (MT + H - MB) / 2.0,
            escape(y_label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
