//! SVG figures: forest plot, profile plot, box/violin plot and moderator interaction
//! panels. Output is plain SVG text with fixed number formatting, so identical inputs
//! give byte-identical files.

use std::fmt::Write as _;

use crate::descriptives::{mean, quantile, sd};
use crate::descriptives::ProfileSeries;
use crate::lmm::{LmmFit, Separation, TREATMENT};
use crate::meta::{format_p, ForestPlotModel};

pub const DEFAULT_WIDTH: f64 = 900.0;
pub const DEFAULT_HEIGHT: f64 = 500.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];
const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Line { x1: f64, y1: f64, x2: f64, y2: f64, stroke: String, width: f64, dash: bool },
    Rect { x: f64, y: f64, w: f64, h: f64, fill: String, stroke: String },
    Circle { cx: f64, cy: f64, r: f64, fill: String },
    Polygon { points: Vec<(f64, f64)>, fill: String, stroke: String, opacity: f64 },
    Polyline { points: Vec<(f64, f64)>, stroke: String, width: f64 },
    Text { x: f64, y: f64, text: String, size: f64, anchor: &'static str, rotate: bool },
}

impl Element {
    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Element::Line { x1, y1, x2, y2, .. } => vec![(*x1, *y1), (*x2, *y2)],
            Element::Rect { x, y, w, h, .. } => vec![(*x, *y), (x + w, y + h)],
            Element::Circle { cx, cy, r, .. } => vec![(cx - r, cy - r), (cx + r, cy + r)],
            Element::Polygon { points, .. } | Element::Polyline { points, .. } => points.clone(),
            Element::Text { x, y, .. } => vec![(*x, *y)],
        }
    }
}

/// Rounds to two decimals and drops negative zero.
fn num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgDocument {
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub elements: Vec<Element>,
}

impl SvgDocument {
    pub fn new(width: f64, height: f64, title: &str) -> Self {
        Self {
            width,
            height,
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            elements: Vec::new(),
        }
    }

    pub fn push(&mut self, e: Element) {
        self.elements.push(e);
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.push(Element::Line { x1, y1, x2, y2, stroke: stroke.into(), width, dash: false });
    }

    fn text(&mut self, x: f64, y: f64, text: impl Into<String>, size: f64, anchor: &'static str) {
        self.push(Element::Text { x, y, text: text.into(), size, anchor, rotate: false });
    }

    /// True when every coordinate lies inside the viewport.
    pub fn within_bounds(&self) -> bool {
        self.elements.iter().flat_map(Element::points).all(|(x, y)| {
            x.is_finite() && y.is_finite() && x >= -1e-9 && y >= -1e-9 && x <= self.width + 1e-9 && y <= self.height + 1e-9
        })
    }

    pub fn count(&self, pred: impl Fn(&Element) -> bool) -> usize {
        self.elements.iter().filter(|e| pred(e)).count()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
            w = num(self.width),
            h = num(self.height)
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>", num(self.width), num(self.height));
        for e in &self.elements {
            match e {
                Element::Line { x1, y1, x2, y2, stroke, width, dash } => {
                    let _ = writeln!(
                        s,
                        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"{}/>",
                        num(*x1),
                        num(*y1),
                        num(*x2),
                        num(*y2),
                        stroke,
                        num(*width),
                        if *dash { " stroke-dasharray=\"4 3\"" } else { "" }
                    );
                }
                Element::Rect { x, y, w, h, fill, stroke } => {
                    let _ = writeln!(
                        s,
                        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"{}\"/>",
                        num(*x),
                        num(*y),
                        num(*w),
                        num(*h),
                        fill,
                        stroke
                    );
                }
                Element::Circle { cx, cy, r, fill } => {
                    let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>", num(*cx), num(*cy), num(*r), fill);
                }
                Element::Polygon { points, fill, stroke, opacity } => {
                    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
                    let _ = writeln!(
                        s,
                        "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"{}\" stroke=\"{}\"/>",
                        pts.join(" "),
                        fill,
                        num(*opacity),
                        stroke
                    );
                }
                Element::Polyline { points, stroke, width } => {
                    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
                    let _ = writeln!(
                        s,
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>",
                        pts.join(" "),
                        stroke,
                        num(*width)
                    );
                }
                Element::Text { x, y, text, size, anchor, rotate } => {
                    let transform = if *rotate {
                        format!(" transform=\"rotate(-90 {} {})\"", num(*x), num(*y))
                    } else {
                        String::new()
                    };
                    let _ = writeln!(
                        s,
                        "<text x=\"{}\" y=\"{}\" font-size=\"{}\" text-anchor=\"{}\" {FONT}{}>{}</text>",
                        num(*x),
                        num(*y),
                        num(*size),
                        anchor,
                        transform,
                        escape(text)
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Linear map from data to pixels.
#[derive(Debug, Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if (d1 - d0).abs() < 1e-12 { (d0 - 1.0, d1 + 1.0) } else { (d0, d1) };
        Self { d0, d1, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.d0.min(self.d1) && v <= self.d0.max(self.d1)
    }
}

/// Roughly five round tick values covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    let r = if r == 0.0 { 0.0 } else { r };
    let s = format!("{r:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn x_axis(doc: &mut SvgDocument, sx: &Scale, y: f64, label: &str) {
    doc.line(sx.p0, y, sx.p1, y, "#000", 1.0);
    for t in ticks(sx.d0, sx.d1) {
        let x = sx.map(t);
        doc.line(x, y, x, y + 5.0, "#000", 1.0);
        doc.text(x, y + 18.0, tick_label(t), 11.0, "middle");
    }
    if !label.is_empty() {
        doc.text((sx.p0 + sx.p1) / 2.0, y + 36.0, label, 12.0, "middle");
    }
}

fn y_axis(doc: &mut SvgDocument, sy: &Scale, x: f64, label: &str) {
    doc.line(x, sy.p0, x, sy.p1, "#000", 1.0);
    for t in ticks(sy.d0, sy.d1) {
        let y = sy.map(t);
        doc.line(x - 5.0, y, x, y, "#000", 1.0);
        doc.text(x - 8.0, y + 4.0, tick_label(t), 11.0, "end");
    }
    if !label.is_empty() {
        let cy = (sy.p0 + sy.p1) / 2.0;
        doc.push(Element::Text { x: x - 45.0, y: cy, text: label.into(), size: 12.0, anchor: "middle", rotate: true });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestOptions {
    pub width: f64,
    pub height: Option<f64>,
    /// Fixed axis range; whiskers beyond it are clipped and drawn with an arrowhead.
    pub x_range: Option<(f64, f64)>,
    pub x_label: String,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self { width: DEFAULT_WIDTH, height: None, x_range: None, x_label: "Standardized mean difference".into() }
    }
}

fn arrowhead(doc: &mut SvgDocument, x: f64, y: f64, right: bool) {
    let dx = if right { -7.0 } else { 7.0 };
    doc.push(Element::Polygon {
        points: vec![(x, y), (x + dx, y - 4.0), (x + dx, y + 4.0)],
        fill: "#000".into(),
        stroke: "#000".into(),
        opacity: 1.0,
    });
}

pub fn render_forest(model: &ForestPlotModel, opts: &ForestOptions) -> SvgDocument {
    let row_h = 28.0;
    let top = 50.0;
    let n_rows = model.rows.len() as f64 + 1.0;
    let height = opts.height.unwrap_or(DEFAULT_HEIGHT.max(top + (n_rows + 1.0) * row_h + 80.0));
    let width = opts.width;
    let mut doc = SvgDocument::new(width, height, "Forest plot");
    doc.x_label = opts.x_label.clone();
    let (left, right) = (170.0, width - 230.0);
    let (lo, hi) = opts.x_range.unwrap_or_else(|| {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for r in model.rows.iter().chain(std::iter::once(&model.pooled)) {
            lo = lo.min(r.ci_low).min(r.d);
            hi = hi.max(r.ci_high).max(r.d);
        }
        let pad = 0.05 * (hi - lo).max(1e-6);
        (lo - pad, hi + pad)
    });
    let sx = Scale::new(lo, hi, left, right);
    doc.text(width / 2.0, 24.0, "Forest plot", 15.0, "middle");
    doc.text(10.0, top - 10.0, "Study", 12.0, "start");
    doc.text(width - 10.0, top - 10.0, "Estimate [95% CI]   Weight", 12.0, "end");
    let max_w = model.rows.iter().map(|r| r.weight_percent).fold(0.0, f64::max).max(1e-9);
    let bottom = top + n_rows * row_h + 10.0;
    if sx.contains(0.0) {
        let x0 = sx.map(0.0);
        doc.push(Element::Line { x1: x0, y1: top, x2: x0, y2: bottom, stroke: "#555".into(), width: 1.0, dash: true });
    }
    for (i, r) in model.rows.iter().enumerate() {
        let y = top + (i as f64 + 0.5) * row_h;
        doc.text(10.0, y + 4.0, r.label.clone(), 12.0, "start");
        let (a, b) = (r.ci_low.max(sx.d0), r.ci_high.min(sx.d1));
        if a < b {
            doc.line(sx.map(a), y, sx.map(b), y, "#000", 1.2);
        }
        if r.ci_low < sx.d0 {
            arrowhead(&mut doc, sx.map(sx.d0), y, false);
        }
        if r.ci_high > sx.d1 {
            arrowhead(&mut doc, sx.map(sx.d1), y, true);
        }
        if sx.contains(r.d) {
            let side = 4.0 + 10.0 * (r.weight_percent / max_w).sqrt();
            doc.push(Element::Rect {
                x: sx.map(r.d) - side / 2.0,
                y: y - side / 2.0,
                w: side,
                h: side,
                fill: PALETTE[0].into(),
                stroke: PALETTE[0].into(),
            });
        }
        doc.text(
            width - 10.0,
            y + 4.0,
            format!("{:.2} [{:.2}, {:.2}]   {:.1}%", r.d, r.ci_low, r.ci_high, r.weight_percent),
            12.0,
            "end",
        );
    }
    let y = top + (model.rows.len() as f64 + 0.5) * row_h;
    let p = &model.pooled;
    doc.text(10.0, y + 4.0, p.label.clone(), 12.0, "start");
    let clamp = |v: f64| sx.map(v.clamp(sx.d0, sx.d1));
    doc.push(Element::Polygon {
        points: vec![(clamp(p.ci_low), y), (clamp(p.d), y - 8.0), (clamp(p.ci_high), y), (clamp(p.d), y + 8.0)],
        fill: "#333".into(),
        stroke: "#000".into(),
        opacity: 1.0,
    });
    doc.text(width - 10.0, y + 4.0, format!("{:.2} [{:.2}, {:.2}]   100%", p.d, p.ci_low, p.ci_high), 12.0, "end");
    x_axis(&mut doc, &sx, bottom, &opts.x_label);
    let c = &model.caption;
    let caption = format!(
        "Heterogeneity: Q = {:.2}, df = {}, p = {}; I\u{b2} = {:.1}%; \u{3c4}\u{b2} = {:.3}",
        c.q,
        c.q_df,
        format_p(c.q_p),
        c.i2,
        c.tau2
    );
    doc.text(10.0, (bottom + 60.0).min(height - 8.0), caption, 12.0, "start");
    doc
}

fn legend(doc: &mut SvgDocument, x: f64, y: f64, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let yy = y + i as f64 * 18.0;
        let color = PALETTE[i % PALETTE.len()];
        doc.line(x, yy, x + 20.0, yy, color, 2.0);
        doc.text(x + 26.0, yy + 4.0, l.clone(), 12.0, "start");
    }
}

/// One polyline per experiment across the categories of the series.
pub fn render_profile(series: &ProfileSeries, width: f64, height: f64) -> SvgDocument {
    let mut doc = SvgDocument::new(width, height, &format!("Profile plot: {}", series.label));
    doc.y_label = series.label.clone();
    let (left, right, top, bottom) = (80.0, width - 190.0, 50.0, height - 60.0);
    let values: Vec<f64> = series.lines.iter().flat_map(|l| l.values.iter().copied()).filter(|v| v.is_finite()).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if values.is_empty() { (0.0, 1.0) } else { (lo, hi) };
    let pad = 0.08 * (hi - lo).max(1e-6);
    let sy = Scale::new(lo - pad, hi + pad, bottom, top);
    let k = series.categories.len().max(1);
    let xpos = |i: usize| {
        if k == 1 {
            (left + right) / 2.0
        } else {
            left + 30.0 + i as f64 * (right - left - 60.0) / (k - 1) as f64
        }
    };
    doc.text(width / 2.0, 24.0, format!("Profile plot: {}", series.label), 15.0, "middle");
    y_axis(&mut doc, &sy, left, &series.label);
    doc.line(left, bottom, right, bottom, "#000", 1.0);
    for (i, c) in series.categories.iter().enumerate() {
        doc.text(xpos(i), bottom + 20.0, c.clone(), 12.0, "middle");
    }
    for (j, line) in series.lines.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let pts: Vec<(f64, f64)> =
            line.values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, v)| (xpos(i), sy.map(*v))).collect();
        if pts.len() >= 2 {
            doc.push(Element::Polyline { points: pts.clone(), stroke: color.into(), width: 2.0 });
        }
        for (x, y) in pts {
            doc.push(Element::Circle { cx: x, cy: y, r: 3.5, fill: color.into() });
        }
    }
    let labels: Vec<String> = series.lines.iter().map(|l| l.experiment_id.clone()).collect();
    legend(&mut doc, right + 20.0, top + 10.0, &labels);
    doc
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxGroup {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quartiles with whiskers at the most extreme points within 1.5·IQR of the box.
pub fn box_stats(values: &[f64]) -> BoxStats {
    let (q1, median, q3) = (quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75));
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = values.iter().copied().filter(|v| *v >= fence_lo && *v <= fence_hi).collect();
    BoxStats {
        q1,
        median,
        q3,
        whisker_low: inside.iter().copied().fold(f64::INFINITY, f64::min).min(q1),
        whisker_high: inside.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(q3),
        outliers: values.iter().copied().filter(|v| *v < fence_lo || *v > fence_hi).collect(),
    }
}

/// Silverman's rule of thumb: 0.9·min(sd, IQR/1.34)·n^(−1/5).
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let s = sd(values);
    let spread = if iqr > 0.0 { s.min(iqr / 1.34) } else { s };
    0.9 * spread * (values.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate at `x`.
pub fn kde(values: &[f64], bandwidth: f64, x: f64) -> f64 {
    let n = values.len() as f64;
    values.iter().map(|v| crate::numerics::normal_pdf((x - v) / bandwidth)).sum::<f64>() / (n * bandwidth)
}

/// Combined violin (Gaussian KDE, trimmed to the data range) and box plot per group.
pub fn render_box_violin(groups: &[BoxGroup], y_label: &str, width: f64, height: f64) -> SvgDocument {
    let mut doc = SvgDocument::new(width, height, "Box plot and violin plot");
    doc.y_label = y_label.into();
    let (left, right, top, bottom) = (80.0, width - 20.0, 50.0, height - 70.0);
    let all: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if all.is_empty() { (0.0, 1.0) } else { (lo, hi) };
    let pad = 0.05 * (hi - lo).max(1e-6);
    let sy = Scale::new(lo - pad, hi + pad, bottom, top);
    doc.text(width / 2.0, 24.0, "Box plot and violin plot", 15.0, "middle");
    y_axis(&mut doc, &sy, left, y_label);
    doc.line(left, bottom, right, bottom, "#000", 1.0);
    let slot = (right - left) / groups.len().max(1) as f64;
    for (i, g) in groups.iter().enumerate() {
        let cx = left + (i as f64 + 0.5) * slot;
        let color = PALETTE[i % PALETTE.len()];
        doc.text(cx, bottom + 20.0, g.label.clone(), 11.0, "middle");
        if g.values.len() < 2 {
            doc.text(cx, bottom + 36.0, "(fewer than 2 points)", 10.0, "middle");
            continue;
        }
        let half = 0.4 * slot;
        let bw = silverman_bandwidth(&g.values);
        let (gmin, gmax) = g.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if bw > 0.0 && gmax > gmin {
            let steps = 64;
            let ys: Vec<f64> = (0..=steps).map(|k| gmin + (gmax - gmin) * k as f64 / steps as f64).collect();
            let dens: Vec<f64> = ys.iter().map(|y| kde(&g.values, bw, *y)).collect();
            let dmax = dens.iter().copied().fold(0.0, f64::max).max(1e-300);
            let mut pts: Vec<(f64, f64)> = ys.iter().zip(&dens).map(|(y, d)| (cx + half * d / dmax, sy.map(*y))).collect();
            pts.extend(ys.iter().zip(&dens).rev().map(|(y, d)| (cx - half * d / dmax, sy.map(*y))));
            doc.push(Element::Polygon { points: pts, fill: color.into(), stroke: color.into(), opacity: 0.25 });
        } else {
            doc.text(cx, bottom + 36.0, "(constant: no violin)", 10.0, "middle");
        }
        let b = box_stats(&g.values);
        let bh = 0.12 * slot;
        doc.line(cx, sy.map(b.whisker_low), cx, sy.map(b.q1), "#000", 1.0);
        doc.line(cx, sy.map(b.q3), cx, sy.map(b.whisker_high), "#000", 1.0);
        doc.line(cx - bh / 2.0, sy.map(b.whisker_low), cx + bh / 2.0, sy.map(b.whisker_low), "#000", 1.0);
        doc.line(cx - bh / 2.0, sy.map(b.whisker_high), cx + bh / 2.0, sy.map(b.whisker_high), "#000", 1.0);
        doc.push(Element::Rect {
            x: cx - bh,
            y: sy.map(b.q3),
            w: 2.0 * bh,
            h: sy.map(b.q1) - sy.map(b.q3),
            fill: "white".into(),
            stroke: "#000".into(),
        });
        doc.line(cx - bh, sy.map(b.median), cx + bh, sy.map(b.median), "#000", 2.0);
        for o in b.outliers {
            doc.push(Element::Circle { cx, cy: sy.map(o), r: 2.5, fill: "#000".into() });
        }
    }
    doc
}

/// Fitted treatment effect as a linear function of a participant covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionPanel {
    pub covariate: String,
    /// Treatment effect at covariate value 0.
    pub intercept: f64,
    pub slope: f64,
    pub p_value: f64,
}

impl InteractionPanel {
    /// Naive fits use β_T + β_{T×x}·x. Within/between fits are drawn along the
    /// within-experiment slope, through the effect at the grand covariate mean `center`.
    pub fn from_fit(fit: &LmmFit, center: f64) -> Option<Self> {
        let m = fit.spec.moderator.as_ref()?;
        let inter = fit.interaction_effect()?;
        let bt = fit.coefficient(TREATMENT)?.estimate;
        let intercept = match m.separation {
            Some(Separation::WithinBetween) => {
                let between = fit.coefficient(&format!("{TREATMENT}:{}_between", m.name))?.estimate;
                bt + between * center - inter.estimate * center
            }
            _ => bt,
        };
        Some(Self { covariate: m.name.clone(), intercept, slope: inter.estimate, p_value: inter.p_value })
    }

    pub fn effect_at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// One panel per covariate, effect line over the 1..4 scale.
pub fn render_interactions(panels: &[InteractionPanel], width: f64, height: f64) -> SvgDocument {
    let mut doc = SvgDocument::new(width, height, "Treatment effect by participant experience");
    doc.text(width / 2.0, 24.0, "Treatment effect by participant experience", 15.0, "middle");
    if panels.is_empty() {
        return doc;
    }
    let effects: Vec<f64> = panels.iter().flat_map(|p| [p.effect_at(1.0), p.effect_at(4.0)]).collect();
    let lo = effects.iter().copied().fold(0.0, f64::min);
    let hi = effects.iter().copied().fold(0.0, f64::max);
    let pad = 0.08 * (hi - lo).max(1e-6);
    let cols = panels.len();
    let panel_w = (width - 20.0) / cols as f64;
    for (i, p) in panels.iter().enumerate() {
        let x0 = 10.0 + i as f64 * panel_w;
        let (left, right, top, bottom) = (x0 + 70.0, x0 + panel_w - 15.0, 60.0, height - 60.0);
        let sx = Scale::new(1.0, 4.0, left, right);
        let sy = Scale::new(lo - pad, hi + pad, bottom, top);
        doc.text((left + right) / 2.0, 46.0, format!("{} (p = {})", p.covariate, format_p(p.p_value)), 12.0, "middle");
        y_axis(&mut doc, &sy, left, if i == 0 { "Treatment effect" } else { "" });
        x_axis(&mut doc, &sx, bottom, "experience (1-4)");
        if sy.contains(0.0) {
            let y0 = sy.map(0.0);
            doc.push(Element::Line { x1: left, y1: y0, x2: right, y2: y0, stroke: "#999".into(), width: 1.0, dash: true });
        }
        let color = PALETTE[i % PALETTE.len()];
        doc.push(Element::Polyline {
            points: vec![(sx.map(1.0), sy.map(p.effect_at(1.0))), (sx.map(4.0), sy.map(p.effect_at(4.0)))],
            stroke: color.into(),
            width: 2.5,
        });
    }
    doc
}

/// Convenience for the box/violin figure: one group per experiment and arm.
pub fn box_groups(set: &crate::data::ReplicationSet) -> Vec<BoxGroup> {
    let mut out = Vec::new();
    for rep in &set.replications {
        for arm in crate::data::Arm::BOTH {
            out.push(BoxGroup {
                label: format!("{} {}", rep.experiment_id, set.levels.label(arm)),
                values: rep.outcomes(arm),
            });
        }
    }
    out
}

/// Mean of a slice, for callers centring covariates.
pub fn center(values: &[f64]) -> f64 {
    mean(values)
}
