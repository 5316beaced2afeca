//! Minimal SVG output: line and scatter plots, color-mapped scatter and a
//! correlation heatmap. Output carries no timestamps so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Compact tick label: integers plain, others with up to 4 significant digits.
fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.fract() == 0.0 && v.abs() < 1e6 {
        return format!("{v:.0}");
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let digits = (3 - a.log10().floor() as i32).clamp(0, 6) as usize;
    let s = format!("{v:.digits$}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn nice(x: f64) -> f64 {
    let e = x.log10().floor();
    let f = x / 10f64.powf(e);
    let n = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    n * 10f64.powf(e)
}

/// Rounded axis bounds and tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - pad, hi + pad)
    };
    let step = nice((hi - lo) / 6.0);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let n = ((end - start) / step).round() as usize;
    let t = (0..=n).map(|i| start + step * i as f64).collect();
    (start, end, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub mark: Mark,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    );
}

fn axes(s: &mut String, f: &Frame, xt: &[f64], yt: &[f64], x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for &x in xt {
        let p = f.px(x);
        let _ = writeln!(s, r#"<line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(s, r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, num(x));
    }
    for &y in yt {
        let p = f.py(y);
        let _ = writeln!(s, r#"<line x1="{}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, p + 4.0, num(y));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 12.0,
        esc(x_label)
    );
    let cy = (t + b) / 2.0;
    let _ = writeln!(
        s,
        r#"<text x="16" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 16 {cy:.2})">{}</text>"#,
        esc(y_label)
    );
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, color: &str, mark: Mark, points: Vec<(f64, f64)>) -> &mut Self {
        self.series.push(Series {
            name: name.into(),
            color: color.into(),
            mark,
            points,
        });
        self
    }

    pub fn render(&self) -> String {
        let finite = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut xl, mut xh, mut yl, mut yh) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in finite {
            xl = xl.min(x);
            xh = xh.max(x);
            yl = yl.min(y);
            yh = yh.max(y);
        }
        if xl > xh {
            (xl, xh, yl, yh) = (0.0, 1.0, 0.0, 1.0);
        }
        let (x0, x1, xt) = ticks(xl, xh);
        let (y0, y1, yt) = ticks(yl, yh);
        let f = Frame { x0, x1, y0, y1 };

        let mut s = String::new();
        header(&mut s, &self.title);
        axes(&mut s, &f, &xt, &yt, &self.x_label, &self.y_label);
        for se in &self.series {
            let pts = se.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite());
            match se.mark {
                Mark::Line => {
                    let mut d = String::new();
                    for (i, &(x, y)) in pts.enumerate() {
                        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, f.px(x), f.py(y));
                    }
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{d}" fill="none" stroke="{}" stroke-width="2"/>"#,
                        se.color
                    );
                }
                Mark::Points => {
                    let _ = writeln!(s, r#"<g fill="{}" fill-opacity="0.6">"#, se.color);
                    for &(x, y) in pts {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, f.px(x), f.py(y));
                    }
                    let _ = writeln!(s, "</g>");
                }
            }
        }
        for (i, se) in self.series.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 12.0;
            match se.mark {
                Mark::Line => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
                        x + 18.0,
                        se.color
                    );
                }
                Mark::Points => {
                    let _ = writeln!(s, r#"<circle cx="{}" cy="{y}" r="4" fill="{}"/>"#, x + 9.0, se.color);
                }
            }
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 24.0, y + 4.0, esc(&se.name));
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

fn lerp_color(stops: &[(f64, [u8; 3])], t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let k = stops.windows(2).position(|w| t <= w[1].0).unwrap_or(stops.len() - 2);
    let (a, ca) = stops[k];
    let (b, cb) = stops[k + 1];
    let u = if b > a { (t - a) / (b - a) } else { 0.0 };
    let c: Vec<u8> = (0..3)
        .map(|i| (ca[i] as f64 + (cb[i] as f64 - ca[i] as f64) * u).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const DIVERGING: [(f64, [u8; 3]); 3] = [(0.0, [33, 102, 172]), (0.5, [247, 247, 247]), (1.0, [178, 24, 43])];
const SEQUENTIAL: [(f64, [u8; 3]); 4] = [
    (0.0, [68, 1, 84]),
    (0.33, [49, 104, 142]),
    (0.66, [53, 183, 121]),
    (1.0, [253, 231, 37]),
];

/// Color for a correlation in [-1, 1]: blue through white to red.
pub fn diverging(v: f64) -> String {
    lerp_color(&DIVERGING, (v + 1.0) / 2.0)
}

fn color_bar(s: &mut String, stops: &[(f64, [u8; 3])], lo: f64, hi: f64) {
    let x = WIDTH - RIGHT + 30.0;
    let (t, b) = (TOP, HEIGHT - BOTTOM);
    let n = 50;
    let h = (b - t) / n as f64;
    for i in 0..n {
        let u = 1.0 - (i as f64 + 0.5) / n as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{:.2}" width="20" height="{:.2}" fill="{}"/>"#,
            t + h * i as f64,
            h + 0.5,
            lerp_color(stops, u)
        );
    }
    let _ = writeln!(s, r#"<rect x="{x}" y="{t}" width="20" height="{}" fill="none" stroke="black"/>"#, b - t);
    for (v, y) in [(hi, t), ((lo + hi) / 2.0, (t + b) / 2.0), (lo, b)] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}">{}</text>"#, x + 26.0, y + 4.0, num(v));
    }
}

/// Points colored by value on a sequential scale from `lo` to `hi`.
pub fn color_scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64, f64)], lo: f64, hi: f64) -> String {
    let (mut xl, mut xh, mut yl, mut yh) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y, _) in points {
        xl = xl.min(x);
        xh = xh.max(x);
        yl = yl.min(y);
        yh = yh.max(y);
    }
    if points.is_empty() {
        (xl, xh, yl, yh) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1, xt) = ticks(xl, xh);
    let (y0, y1, yt) = ticks(yl, yh);
    let f = Frame { x0, x1, y0, y1 };
    let mut s = String::new();
    header(&mut s, title);
    axes(&mut s, &f, &xt, &yt, x_label, y_label);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for &(x, y, v) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            f.px(x),
            f.py(y),
            lerp_color(&SEQUENTIAL, (v - lo) / span)
        );
    }
    color_bar(&mut s, &SEQUENTIAL, lo, hi);
    s.push_str("</svg>\n");
    s
}

/// Square heatmap of a correlation matrix with labeled rows and columns and
/// a color bar over [-1, 1].
pub fn heatmap(title: &str, labels: &[String], value: impl Fn(usize, usize) -> f64) -> String {
    let k = labels.len().max(1);
    let margin = 150.0;
    let cell = (440.0 / k as f64).min(60.0);
    let side = cell * k as f64;
    let w = margin + side + 120.0;
    let h = margin + side + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
    for (i, l) in labels.iter().enumerate() {
        let c = margin + cell * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            margin - 6.0,
            c + 4.0,
            esc(l)
        );
        let _ = writeln!(
            s,
            r#"<text x="{c:.2}" y="{:.2}" text-anchor="start" transform="rotate(-60 {c:.2} {:.2})">{}</text>"#,
            margin - 6.0,
            margin - 6.0,
            esc(l)
        );
    }
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            let v = value(i, j);
            let (x, y) = (margin + cell * j as f64, margin + cell * i as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"/>"#,
                diverging(v)
            );
            if cell >= 28.0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{v:.2}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0 + 3.0
                );
            }
        }
    }
    let bx = margin + side + 30.0;
    let n = 40;
    let bh = side / n as f64;
    for i in 0..n {
        let u = 1.0 - (i as f64 + 0.5) / n as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{bx:.2}" y="{:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            margin + bh * i as f64,
            bh + 0.5,
            lerp_color(&DIVERGING, u)
        );
    }
    for (v, y) in [(1.0, margin), (0.0, margin + side / 2.0), (-1.0, margin + side)] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + 24.0, y + 4.0, num(v));
    }
    s.push_str("</svg>\n");
    s
}
