//! Minimal SVG 1.1 line plots and heatmaps.

use std::fmt::Write;

pub const BLUE: &str = "#1f77b4";
pub const ORANGE: &str = "#ff7f0e";
pub const GREEN: &str = "#2ca02c";
pub const RED: &str = "#d62728";
pub const GREY: &str = "#7f7f7f";

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub color: &'static str,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>, color: &'static str) -> Self {
        Self { label: label.into(), x, y, color, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Self::default() }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Roughly five round tick values covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
        (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
    } else {
        (lo, hi)
    }
}

fn panel_body(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
    let ty = |v: f64| if p.log_y { v.max(1e-300).log10() } else { v };
    let (xl, xh) = range(p.series.iter().flat_map(|s| s.x.iter().copied()));
    let (yl, yh) = range(p.series.iter().flat_map(|s| s.y.iter().map(|&v| ty(v))));
    let pad = 0.05 * (yh - yl);
    let (yl, yh) = (yl - pad, yh + pad);
    let sx = |v: f64| x0 + (v - xl) / (xh - xl) * pw;
    let sy = |v: f64| y0 + ph - (ty(v) - yl) / (yh - yl) * ph;

    let _ = writeln!(out, "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"black\"/>");
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>", x0 + pw / 2.0, oy + 18.0, esc(&p.title));
    for t in ticks(xl, xh) {
        let x = sx(t);
        let _ = writeln!(out, "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>", y0 + ph, y0 + ph + 4.0);
        let _ = writeln!(out, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", y0 + ph + 16.0, fmt_tick(t));
    }
    for t in ticks(yl, yh) {
        let y = y0 + ph - (t - yl) / (yh - yl) * ph;
        let label = if p.log_y { format!("1e{}", t) } else { fmt_tick(t) };
        let _ = writeln!(out, "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{x0:.1}\" y2=\"{y:.1}\" stroke=\"black\"/>", x0 - 4.0);
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 6.0, y + 4.0, label);
    }
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", x0 + pw / 2.0, y0 + ph + 34.0, esc(&p.x_label));
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1} {:.1})\">{}</text>",
        ox + 14.0,
        y0 + ph / 2.0,
        ox + 14.0,
        y0 + ph / 2.0,
        esc(&p.y_label)
    );
    let _ = writeln!(out, "<clipPath id=\"c{:.0}_{:.0}\"><rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\"/></clipPath>", ox, oy);
    for s in &p.series {
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let dash = if s.dashed { " stroke-dasharray=\"5,3\"" } else { "" };
        let _ = writeln!(
            out,
            "<polyline clip-path=\"url(#c{:.0}_{:.0})\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"{dash} points=\"{}\"/>",
            ox,
            oy,
            s.color,
            pts.join(" ")
        );
    }
    // legend of distinct labels
    let mut seen: Vec<&str> = Vec::new();
    for s in &p.series {
        if s.label.is_empty() || seen.contains(&s.label.as_str()) {
            continue;
        }
        let ly = y0 + 12.0 + 13.0 * seen.len() as f64;
        let lx = x0 + pw - 110.0;
        let dash = if s.dashed { " stroke-dasharray=\"5,3\"" } else { "" };
        let _ = writeln!(out, "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\"{dash}/>", ly - 4.0, lx + 18.0, ly - 4.0, s.color);
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{ly:.1}\">{}</text>", lx + 22.0, esc(&s.label));
        seen.push(&s.label);
    }
}

/// Panels laid out row by row, `columns` wide.
pub fn line_panels(panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let mut out = header(PANEL_W * columns as f64, PANEL_H * rows as f64);
    for (i, p) in panels.iter().enumerate() {
        panel_body(&mut out, p, PANEL_W * (i % columns) as f64, PANEL_H * (i / columns) as f64);
    }
    out.push_str("</svg>\n");
    out
}

/// Cell colours run from blue (0) through white (`mid`) to red (`2 mid`
/// and above); missing cells are grey.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Column centres.
    pub xs: Vec<f64>,
    /// Row centres.
    pub ys: Vec<f64>,
    /// `values[i * ys.len() + j]` is the cell at `(xs[i], ys[j])`.
    pub values: Vec<Option<f64>>,
    pub mid: f64,
    pub overlays: Vec<Series>,
}

fn colour(v: f64, mid: f64) -> String {
    let u = (v / (2.0 * mid)).clamp(0.0, 1.0);
    let (r, g, b) = if u < 0.5 {
        let a = u / 0.5;
        (30.0 + 225.0 * a, 70.0 + 185.0 * a, 180.0 + 75.0 * a)
    } else {
        let a = (u - 0.5) / 0.5;
        (255.0 - 40.0 * a, 255.0 - 215.0 * a, 255.0 - 215.0 * a)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

fn half_steps(c: &[f64]) -> Vec<(f64, f64)> {
    (0..c.len())
        .map(|i| {
            let left = if i > 0 { 0.5 * (c[i] - c[i - 1]) } else if c.len() > 1 { 0.5 * (c[1] - c[0]) } else { 0.5 };
            let right = if i + 1 < c.len() { 0.5 * (c[i + 1] - c[i]) } else { left };
            (c[i] - left, c[i] + right)
        })
        .collect()
}

pub fn heatmap(h: &Heatmap) -> String {
    let (w, ht) = (560.0, 420.0);
    let (x0, y0, pw, ph) = (MARGIN_L, MARGIN_T, w - MARGIN_L - 90.0, ht - MARGIN_T - MARGIN_B);
    let xe = half_steps(&h.xs);
    let ye = half_steps(&h.ys);
    let (xl, xh) = (xe.first().map_or(0.0, |e| e.0), xe.last().map_or(1.0, |e| e.1));
    let (yl, yh) = (ye.first().map_or(0.0, |e| e.0), ye.last().map_or(1.0, |e| e.1));
    let sx = |v: f64| x0 + (v - xl) / (xh - xl) * pw;
    let sy = |v: f64| y0 + ph - (v - yl) / (yh - yl) * ph;
    let mut out = header(w, ht);
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"12\">{}</text>", x0 + pw / 2.0, esc(&h.title));
    for (i, &(a, b)) in xe.iter().enumerate() {
        for (j, &(c, d)) in ye.iter().enumerate() {
            let fill = match h.values.get(i * h.ys.len() + j).copied().flatten() {
                Some(v) if v.is_finite() => colour(v, h.mid),
                _ => "#bbbbbb".into(),
            };
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
                sx(a),
                sy(d),
                sx(b) - sx(a),
                sy(c) - sy(d)
            );
        }
    }
    let _ = writeln!(out, "<clipPath id=\"hm\"><rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\"/></clipPath>");
    for s in &h.overlays {
        let pts: Vec<String> = s.x.iter().zip(&s.y).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if s.dashed { " stroke-dasharray=\"5,3\"" } else { "" };
        let _ = writeln!(
            out,
            "<polyline clip-path=\"url(#hm)\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{dash} points=\"{}\"/>",
            s.color,
            pts.join(" ")
        );
    }
    let _ = writeln!(out, "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"black\"/>");
    for &x in &h.xs {
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", sx(x), y0 + ph + 16.0, fmt_tick(x));
    }
    for &y in &h.ys {
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 6.0, sy(y) + 4.0, fmt_tick(y));
    }
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", x0 + pw / 2.0, y0 + ph + 34.0, esc(&h.x_label));
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        y0 + ph / 2.0,
        y0 + ph / 2.0,
        esc(&h.y_label)
    );
    // colour bar
    let bx = x0 + pw + 25.0;
    for k in 0..50 {
        let v = 2.0 * h.mid * (1.0 - k as f64 / 50.0);
        let _ = writeln!(
            out,
            "<rect x=\"{bx:.1}\" y=\"{:.2}\" width=\"15\" height=\"{:.2}\" fill=\"{}\"/>",
            y0 + k as f64 * ph / 50.0,
            ph / 50.0 + 0.3,
            colour(v, h.mid)
        );
    }
    for (v, y) in [(2.0 * h.mid, y0), (h.mid, y0 + ph / 2.0), (0.0, y0 + ph)] {
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", bx + 19.0, y + 4.0, fmt_tick(v));
    }
    out.push_str("</svg>\n");
    out
}
