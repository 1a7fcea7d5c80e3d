//! A small line-chart renderer. Output depends only on the input values, so
//! re-plotting the same metrics gives the same bytes.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const TARGET_TICKS: f64 = 5.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One named line; `None` values break the line.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, Option<f64>)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, Option<f64>)>) -> Self {
        Self { name: name.into(), points, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

/// Widens `(lo, hi)` to multiples of a 1-2-5 step; returns the new bounds
/// and the step.
fn nice_axis((lo, hi): (f64, f64)) -> (f64, f64, f64) {
    let raw = (hi - lo) / TARGET_TICKS;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

/// Tick labels with at most four significant decimals and no trailing zeros.
fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))).unwrap_or((0.0, 1.0));
    let ys = extent(series.iter().flat_map(|s| s.points.iter().filter_map(|p| p.1))).unwrap_or((0.0, 1.0));
    let (x0, x1, xstep) = nice_axis(padded(xs));
    let (y0, y1, ystep) = nice_axis(padded(ys));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let w = &mut out;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();

    for i in 0..=((x1 - x0) / xstep).round() as usize {
        let xv = x0 + i as f64 * xstep;
        let gx = px(xv);
        writeln!(w, r##"<line x1="{gx:.2}" y1="{TOP:.2}" x2="{gx:.2}" y2="{:.2}" stroke="#e5e5e5"/>"##, TOP + ph).unwrap();
        writeln!(w, r#"<text x="{gx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(xv)).unwrap();
    }
    for i in 0..=((y1 - y0) / ystep).round() as usize {
        let yv = y0 + i as f64 * ystep;
        let gy = py(yv);
        writeln!(w, r##"<line x1="{LEFT:.2}" y1="{gy:.2}" x2="{:.2}" y2="{gy:.2}" stroke="#e5e5e5"/>"##, LEFT + pw).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, gy + 4.0, label(yv)).unwrap();
    }
    writeln!(w, r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(x_label)).unwrap();
    writeln!(w, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, escape(y_label)).unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(x, y) in &s.points {
            match y.filter(|v| v.is_finite()) {
                Some(y) => runs.last_mut().unwrap().push((px(x), py(y))),
                None => runs.push(Vec::new()),
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            if let [(cx, cy)] = run[..] {
                writeln!(w, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2" fill="{color}"/>"#).unwrap();
                continue;
            }
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" ")).unwrap();
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 160.0;
        writeln!(w, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, ly - 4.0, lx + 20.0, ly - 4.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 26.0, escape(&s.name)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}
