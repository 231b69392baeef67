use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{CsvRecord, ExperimentError, SweepRow};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 6;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"];

/// Columns usable as plot axis or series.
pub const PLOT_COLUMNS: [&str; 6] = ["kernel", "n", "p", "strategy", "scenario", "beta"];

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn label(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

fn cell(r: &CsvRecord, column: &str) -> Option<Cell> {
    Some(match column {
        "kernel" => Cell::Text(r.kernel.to_string()),
        "n" => Cell::Num(r.n as f64),
        "p" => Cell::Num(r.p as f64),
        "strategy" => Cell::Text(r.strategy.to_string()),
        "scenario" => Cell::Text(r.scenario.clone()),
        "beta" => Cell::Num(r.beta?),
        _ => unreachable!("column checked by caller"),
    })
}

struct Series {
    label: String,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { (0.05 * lo.abs()).max(0.5) };
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders mean normalized communication against `x`, one polyline per
/// distinct value of `series`, plus a dashed analysis polyline for every
/// series that carries predictions.
pub fn render_svg_plot(records: &[CsvRecord], x: &str, series: &str) -> Result<String, ExperimentError> {
    for column in [x, series] {
        if !PLOT_COLUMNS.contains(&column) {
            return Err(ExperimentError::UnknownColumn(column.to_string()));
        }
    }
    let rows: Vec<(Cell, String, &CsvRecord)> =
        records.iter().filter_map(|r| Some((cell(r, x)?, cell(r, series)?.label(), r))).collect();
    if rows.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }

    // Non-numeric x values are placed at evenly spaced category positions.
    let numeric = rows.iter().all(|(c, _, _)| matches!(c, Cell::Num(_)));
    let mut categories: Vec<String> = Vec::new();
    let xpos = |c: &Cell, categories: &mut Vec<String>| match c {
        Cell::Num(v) if numeric => *v,
        other => {
            let label = other.label();
            match categories.iter().position(|l| *l == label) {
                Some(i) => i as f64,
                None => {
                    categories.push(label);
                    (categories.len() - 1) as f64
                }
            }
        }
    };

    let mut order: Vec<String> = Vec::new();
    let mut measured: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut predicted: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (c, key, r) in &rows {
        let px = xpos(c, &mut categories);
        if !order.contains(key) {
            order.push(key.clone());
        }
        measured.entry(key.clone()).or_default().push((px, r.mean_norm_comm));
        if let Some(a) = r.analysis_pred {
            predicted.entry(key.clone()).or_default().push((px, a));
        }
    }
    let mut all_series = Vec::new();
    for key in &order {
        let mut points = measured.remove(key).unwrap_or_default();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        all_series.push(Series { label: key.clone(), dashed: false, points });
        if let Some(mut points) = predicted.remove(key) {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            all_series.push(Series { label: format!("{key} (analysis)"), dashed: true, points });
        }
    }

    let pts = || all_series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) =
        padded(pts().map(|p| p.0).fold(f64::INFINITY, f64::min), pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) =
        padded(pts().map(|p| p.1).fold(f64::INFINITY, f64::min), pts().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * plot_w;
    let sy = |v: f64| TOP + plot_h - (v - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (bx, by) = (LEFT, TOP + plot_h);
    let _ =
        writeln!(svg, r#"<path d="M{LEFT} {TOP} L{bx} {by} L{:.2} {by}" fill="none" stroke="black"/>"#, LEFT + plot_w);

    // y ticks
    for i in 0..TICKS {
        let v = y0 + (y1 - y0) * i as f64 / (TICKS - 1) as f64;
        let py = sy(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(v)
        );
    }
    // x ticks
    if numeric {
        for i in 0..TICKS {
            let v = x0 + (x1 - x0) * i as f64 / (TICKS - 1) as f64;
            let px = sx(v);
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{by:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                by + 5.0,
                by + 18.0,
                tick_label(v)
            );
        }
    } else {
        for (i, label) in categories.iter().enumerate() {
            let px = sx(i as f64);
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{by:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                by + 5.0,
                by + 18.0,
                escape(label)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">normalized communication</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, s) in all_series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let coords: Vec<String> = s.points.iter().map(|&(a, b)| format!("{:.2},{:.2}", sx(a), sy(b))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
        for &(a, b) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(a), sy(b));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the plot of `rows` to `dest`.
pub fn emit_svg_plot(rows: &[SweepRow], x: &str, series: &str, dest: &Path) -> Result<(), ExperimentError> {
    let records: Vec<CsvRecord> = rows.iter().map(SweepRow::record).collect();
    std::fs::write(dest, render_svg_plot(&records, x, series)?)?;
    Ok(())
}
