//! CSV and SVG output for result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::XAxis;
use super::sweep::{ResultRecord, ResultTable};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CSV_HEADER: [&str; 19] = [
    "d", "p", "p_student", "r", "N", "T", "seed", "estimator", "lambda", "step_size",
    "error_frob_sq", "train_loss", "beta", "gamma", "beta_tilde", "kappa", "eta", "runtime_ms",
    "status",
];

pub fn table_to_csv(table: &ResultTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if table.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in &table.records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn table_from_csv(bytes: &[u8]) -> Result<ResultTable> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    let records = rd.deserialize().collect::<std::result::Result<Vec<ResultRecord>, _>>()?;
    Ok(ResultTable { records })
}

pub fn export_csv(table: &ResultTable, path: &Path) -> Result<()> {
    write_atomic(path, &table_to_csv(table)?)
}

pub fn read_csv(path: &Path) -> Result<ResultTable> {
    table_from_csv(&std::fs::read(path)?)
}

/// How plotted points are grouped into colored series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeriesBy {
    /// `p_student` if it varies, else estimator and λ if they vary, else `(p, d, N)`.
    #[default]
    Auto,
    Config,
    PStudent,
    Lambda,
}

impl std::str::FromStr for SeriesBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SeriesBy::Auto),
            "config" => Ok(SeriesBy::Config),
            "p_student" => Ok(SeriesBy::PStudent),
            "lambda" => Ok(SeriesBy::Lambda),
            other => Err(Error::Parse(format!("unknown series grouping `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotOptions {
    pub x_axis: XAxis,
    pub series: SeriesBy,
    pub title: Option<String>,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions { x_axis: XAxis::BetaOverGamma, series: SeriesBy::Auto, title: None, width: 640.0, height: 480.0 }
    }
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Log-log mapping from data coordinates to SVG pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotFrame {
    /// `log10` bounds of the axes, snapped to whole decades.
    pub lx: (f64, f64),
    pub ly: (f64, f64),
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl PlotFrame {
    /// Decade-aligned frame covering `points` and the reference `y = 1/x`.
    pub fn fit(points: &[(f64, f64)], opts: &PlotOptions) -> Option<Self> {
        let xs = points.iter().map(|p| p.0.log10());
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !x0.is_finite() {
            return None;
        }
        let ys = points.iter().map(|p| p.1.log10()).chain([-x0, -x1]);
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let snap = |lo: f64, hi: f64| {
            let (a, b) = (lo.floor(), hi.ceil());
            if a == b { (a, a + 1.0) } else { (a, b) }
        };
        Some(PlotFrame {
            lx: snap(x0, x1),
            ly: snap(y0, y1),
            left: MARGIN_LEFT,
            top: MARGIN_TOP,
            width: opts.width - MARGIN_LEFT - MARGIN_RIGHT,
            height: opts.height - MARGIN_TOP - MARGIN_BOTTOM,
        })
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x.log10() - self.lx.0) / (self.lx.1 - self.lx.0);
        let fy = (y.log10() - self.ly.0) / (self.ly.1 - self.ly.0);
        (self.left + fx * self.width, self.top + (1.0 - fy) * self.height)
    }

    pub fn unmap(&self, px: f64, py: f64) -> (f64, f64) {
        let fx = (px - self.left) / self.width;
        let fy = 1.0 - (py - self.top) / self.height;
        (
            10f64.powf(self.lx.0 + fx * (self.lx.1 - self.lx.0)),
            10f64.powf(self.ly.0 + fy * (self.ly.1 - self.ly.0)),
        )
    }
}

fn series_label(r: &ResultRecord, by: SeriesBy) -> String {
    match by {
        SeriesBy::PStudent => format!("p'={}", r.p_student),
        SeriesBy::Lambda if r.lambda == 0.0 => r.estimator.to_string(),
        SeriesBy::Lambda => format!("{} lambda={}", r.estimator, r.lambda),
        _ => format!("p={} d={} N={}", r.p, r.d, r.n),
    }
}

fn resolve_series(records: &[&ResultRecord], by: SeriesBy) -> SeriesBy {
    if by != SeriesBy::Auto {
        return by;
    }
    let varies = |f: &dyn Fn(&ResultRecord) -> String| {
        records.first().is_some_and(|a| records.iter().any(|b| f(a) != f(b)))
    };
    if varies(&|r| r.p_student.to_string()) {
        SeriesBy::PStudent
    } else if varies(&|r| format!("{}{}", r.estimator, r.lambda)) {
        SeriesBy::Lambda
    } else {
        SeriesBy::Config
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG: seed-averaged error against the chosen axis (raw rows when
/// the table holds no averages), plus the dashed reference `y = 1/x`.
pub fn render_plot(table: &ResultTable, opts: &PlotOptions) -> Result<String> {
    let mut rows: Vec<&ResultRecord> = table.averaged().collect();
    if rows.is_empty() {
        rows = table.records.iter().collect();
    }
    rows.retain(|r| {
        let x = opts.x_axis.value(r);
        x > 0.0 && x.is_finite() && r.error_frob_sq > 0.0 && r.error_frob_sq.is_finite()
    });
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (opts.x_axis.value(r), r.error_frob_sq)).collect();
    let frame = PlotFrame::fit(&points, opts)
        .ok_or_else(|| Error::InsufficientData("no finite positive points to plot".into()))?;
    let by = resolve_series(&rows, opts.series);
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (r, pt) in rows.iter().zip(&points) {
        series.entry(series_label(r, by)).or_default().push(*pt);
    }

    let mut s = String::new();
    let (w, h) = (opts.width, opts.height);
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    if let Some(t) = &opts.title {
        writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, frame.left + frame.width / 2.0, escape(t)).unwrap();
    }
    // Decade grid and tick labels.
    for e in (frame.lx.0 as i32)..=(frame.lx.1 as i32) {
        let (px, _) = frame.map(10f64.powi(e), 10f64.powf(frame.ly.0));
        writeln!(s, r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/>"##, frame.top, frame.top + frame.height).unwrap();
        writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#, frame.top + frame.height + 18.0).unwrap();
    }
    for e in (frame.ly.0 as i32)..=(frame.ly.1 as i32) {
        let (_, py) = frame.map(10f64.powf(frame.lx.0), 10f64.powi(e));
        writeln!(s, r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##, frame.left, frame.left + frame.width).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, frame.left - 6.0, py + 4.0).unwrap();
    }
    writeln!(s, r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#, frame.left, frame.top, frame.width, frame.height).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, frame.left + frame.width / 2.0, h - 12.0, opts.x_axis.label()).unwrap();
    writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">error_frob_sq</text>"#, frame.top + frame.height / 2.0, frame.top + frame.height / 2.0).unwrap();

    // Reference y = 1/x through every decade of the x-range.
    let (x0, x1) = (10f64.powf(frame.lx.0), 10f64.powf(frame.lx.1));
    let ref_pts: Vec<String> = (0..=(frame.lx.1 - frame.lx.0) as i32)
        .map(|k| {
            let x = x0 * 10f64.powi(k);
            let (px, py) = frame.map(x.min(x1), 1.0 / x.min(x1));
            format!("{px:.4},{py:.4}")
        })
        .collect();
    writeln!(s, r#"<polyline class="reference" points="{}" fill="none" stroke="black" stroke-dasharray="6,4"/>"#, ref_pts.join(" ")).unwrap();

    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| {
                let (px, py) = frame.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-opacity="0.5"/>"#, coords.join(" ")).unwrap();
        for &(x, y) in &sorted {
            let (px, py) = frame.map(x, y);
            writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3.5" fill="{color}"/>"#).unwrap();
        }
        let ly = frame.top + 14.0 + 18.0 * i as f64;
        let lx = frame.left + frame.width + 14.0;
        writeln!(s, r#"<circle cx="{lx}" cy="{}" r="4" fill="{color}"/>"#, ly - 4.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 10.0, escape(label)).unwrap();
    }
    let ly = frame.top + 14.0 + 18.0 * series.len() as f64;
    let lx = frame.left + frame.width + 8.0;
    writeln!(s, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-dasharray="6,4"/>"#, ly - 4.0, lx + 14.0, ly - 4.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{ly}">gamma / beta</text>"#, lx + 16.0).unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn export_plot(table: &ResultTable, path: &Path, opts: &PlotOptions) -> Result<()> {
    write_atomic(path, render_plot(table, opts)?.as_bytes())
}
