//! Standalone SVG plots. Each document carries its plotted data in a
//! leading comment so diffs of the artifact tree show numeric changes.

use std::fmt::Write;

use laminate::mesh::{AnnulusChart, Domain, Point, SurfaceMesh};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(out: &mut String, title: &str, data: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, "<!-- data\n{}-->", data.replace("--", "- -"));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Piecewise-linear blue-to-yellow ramp on `[0, 1]`.
fn ramp(t: f64) -> String {
    const STOPS: [[f64; 3]; 4] = [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [253.0, 231.0, 37.0]];
    let t = t.clamp(0.0, 1.0) * 3.0;
    let i = (t.floor() as usize).min(2);
    let f = t - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Display position of a chart point: polar annulus charts are unrolled into
/// the plane, everything else is drawn as is.
fn display(mesh: &SurfaceMesh, x: Point) -> Point {
    match mesh.domain() {
        Some(Domain::Annulus { options, .. }) if options.chart == AnnulusChart::Polar => {
            [x[0] * x[1].cos(), x[0] * x[1].sin()]
        }
        _ => x,
    }
}

/// Triangles colored by `values`; triangles with `mark` set get a dark outline.
pub fn field(mesh: &SurfaceMesh, values: &[f64], mark: &[bool], title: &str) -> String {
    let pts: Vec<Point> = mesh.vertices().iter().map(|x| display(mesh, *x)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let scale = ((W - 2.0 * MARGIN) / (x1 - x0)).min((H - 2.0 * MARGIN) / (y1 - y0));
    let map = |p: Point| [MARGIN + (p[0] - x0) * scale, H - MARGIN - (p[1] - y0) * scale];
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut data = String::from("triangle,value,marked\n");
    for (t, v) in values.iter().enumerate() {
        let _ = writeln!(data, "{t},{v:e},{}", mark.get(t).copied().unwrap_or(false) as u8);
    }
    let mut out = String::new();
    header(&mut out, title, &data);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let corners: Vec<String> = tri
            .iter()
            .map(|&v| {
                let q = map(pts[v]);
                format!("{:.2},{:.2}", q[0], q[1])
            })
            .collect();
        let fill = ramp((values[t] - lo) / span);
        let stroke = if mark.get(t).copied().unwrap_or(false) {
            r##"stroke="#202020" stroke-width="0.6""##.to_string()
        } else {
            format!(r#"stroke="{fill}" stroke-width="0.3""#)
        };
        let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" {stroke}/>"#, corners.join(" "));
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="12">min {lo:.4e}   max {hi:.4e}   outlined: stretch set</text>"#,
        H - 16.0
    );
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// Line chart; `log2_x` plots `log2(x)` on the horizontal axis.
pub fn lines(series: &[Series], title: &str, x_label: &str, y_label: &str, log2_x: bool) -> String {
    let tx = |x: f64| if log2_x { x.log2() } else { x };
    let all = series.iter().flat_map(|s| s.points.iter().map(|(x, y)| (tx(*x), *y)));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let map = |x: f64, y: f64| {
        [
            MARGIN + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * MARGIN),
            H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN),
        ]
    };
    let mut data = String::from("series,x,y\n");
    for s in series {
        for (x, y) in &s.points {
            let _ = writeln!(data, "{},{x:e},{y:e}", s.name);
        }
    }
    let mut out = String::new();
    header(&mut out, title, &data);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        let ypx = H - MARGIN - f * (H - 2.0 * MARGIN);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{yv:.4}</text>"#,
            MARGIN - 4.0,
            ypx + 4.0
        );
        let xv = x0 + f * (x1 - x0);
        let label = if log2_x { format!("{:.4}", 2f64.powf(xv)) } else { format!("{xv:.4}") };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#,
            MARGIN + f * (W - 2.0 * MARGIN),
            H - MARGIN + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| {
                let q = map(*x, *y);
                format!("{:.2},{:.2}", q[0], q[1])
            })
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 14.0 + 15.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
