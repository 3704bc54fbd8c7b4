//! Static SVG log-log plot of a rate table, with reference slopes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One regularizer's curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub kind: String,
    pub points: Vec<(f64, f64)>,
    pub predicted_slope: f64,
}

/// Reads `kind`, `n`, `mean_excess` and `predicted_slope` from a rate table.
pub fn read_series<R: Read>(input: R) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed(format!("missing column `{name}`")))
    };
    let (ih, ik, inn, im, ip) = (
        col("config_hash")?,
        col("kind")?,
        col("n")?,
        col("mean_excess")?,
        col("predicted_slope")?,
    );
    let mut hash: Option<String> = None;
    let mut by_kind: BTreeMap<String, Series> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Malformed("short row".into()));
        let h = field(ih)?.to_string();
        match &hash {
            None => hash = Some(h),
            Some(prev) if *prev != h => {
                return Err(Error::Malformed("rows from different configurations".into()));
            }
            _ => {}
        }
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse::<f64>()
                .map_err(|e| Error::Malformed(format!("bad number `{}`: {e}", rec.get(i).unwrap_or(""))))
        };
        let kind = field(ik)?.to_string();
        let (n, m, slope) = (num(inn)?, num(im)?, num(ip)?);
        let s = by_kind.entry(kind.clone()).or_insert_with(|| {
            order.push(kind.clone());
            Series {
                kind,
                points: Vec::new(),
                predicted_slope: slope,
            }
        });
        if n > 0.0 && m > 0.0 && m.is_finite() {
            s.points.push((n, m));
        }
    }
    let series: Vec<Series> = order
        .into_iter()
        .filter_map(|k| by_kind.remove(&k))
        .filter(|s| !s.points.is_empty())
        .collect();
    if series.is_empty() {
        return Err(Error::Malformed("no data rows".into()));
    }
    Ok(series)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the series on log-log axes. Each series gets a dashed reference
/// line through its first point with its predicted slope.
pub fn render_svg(series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Malformed("no data rows".into()));
    }
    let lx = |v: f64| v.log10();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(lx(x));
        x1 = x1.max(lx(x));
        y0 = y0.min(lx(y));
        y1 = y1.max(lx(y));
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (x0, x1) = (x0.floor(), x1.ceil());
    let (y0, y1) = (y0.floor(), y1.ceil());
    let px = |v: f64| MARGIN + (lx(v) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (lx(v) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/></clipPath>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = px(10f64.powi(d));
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">1e{d}</text>"#,
            HEIGHT - MARGIN,
            HEIGHT - MARGIN + 5.0,
            HEIGHT - MARGIN + 20.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">1e{d}</text>"#,
            MARGIN - 5.0,
            MARGIN - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">sample size n</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean excess risk</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        if s.predicted_slope.is_finite() {
            let (xa, ya) = pts[0];
            let xb = pts[pts.len() - 1].0.max(xa * 10.0);
            let yb = ya * (xb / xa).powf(s.predicted_slope);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4" clip-path="url(#plot)"/>"#,
                px(xa),
                py(ya),
                px(xb),
                py(yb)
            );
        }
        let ly = MARGIN + 18.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="12" fill="{color}" text-anchor="end">{} (reference slope {:.3})</text>"#,
            WIDTH - MARGIN - 8.0,
            escape(&s.kind),
            s.predicted_slope
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads a rate table and writes the SVG next to `out`.
pub fn emit_plot(csv_path: &Path, out: &Path) -> Result<()> {
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let series = read_series(file)?;
    let svg = render_svg(&series)?;
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
