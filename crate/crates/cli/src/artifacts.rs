//! CSV, JSON and SVG emission.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use csl_core::sweeplab::{Quantity, SweepReport};
use serde::Serialize;

/// Scientific notation with 12 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_path: Option<&'a Path>,
    pub jobs: usize,
    pub lambda_max: Option<f64>,
    pub strict: bool,
    pub config: &'a C,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub command: &'a str,
    pub kind: &'a str,
    pub message: String,
    pub details: Vec<String>,
}

pub fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// `log₂ quotient` against `log₂ λ` per `p`, with the fitted lines.
pub fn loglog_svg(report: &SweepReport) -> String {
    let (w, h, margin) = (640.0, 420.0, 60.0);
    let mut series = Vec::new();
    for (j, &p) in report.ps.iter().enumerate() {
        let pts: Vec<(f64, f64)> = report.surviving().map(|(l, m)| (l.log2(), m.quotient[j].log2())).collect();
        let fit = report.slope(p, Quantity::Quotient).map(|r| r.fit);
        series.push((p, pts, fit));
    }
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts, _)| pts.iter().copied()).collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if all.is_empty() {
        svg.push_str("<text x=\"20\" y=\"40\" font-family=\"sans-serif\">no surviving cells</text>\n</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    let pad = |lo: &mut f64, hi: &mut f64| {
        let r = (*hi - *lo).max(0.5);
        *lo -= 0.1 * r;
        *hi += 0.1 * r;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);

    svg.push_str(&format!(
        "<g stroke=\"black\" fill=\"none\"><line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/>\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\"/></g>\n",
        m = margin,
        b = h - margin,
        r = w - margin
    ));
    for k in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = sx(k as f64);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{k}</text>\n",
            h - margin,
            h - margin + 5.0,
            h - margin + 20.0
        ));
    }
    let ystep = ((y1 - y0) / 6.0).max(0.1);
    let mut y = (y0 / ystep).ceil() * ystep;
    while y <= y1 {
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{margin}\" y2=\"{py:.1}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{y:.2}</text>\n",
            margin - 5.0,
            margin - 8.0,
            sy(y) + 4.0,
            py = sy(y)
        ));
        y += ystep;
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">log2 lambda</text>\n\
         <text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">log2 quotient</text>\n",
        w / 2.0,
        h - 15.0,
        h / 2.0,
        h / 2.0
    ));
    for (i, (p, pts, fit)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for &(x, y) in pts {
            svg.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n", sx(x), sy(y)));
        }
        if let (Some(f), Some(first), Some(last)) = (fit, pts.first(), pts.last()) {
            let line = |x: f64| f.intercept + f.slope * x;
            svg.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\"/>\n",
                sx(first.0),
                sy(line(first.0)),
                sx(last.0),
                sy(line(last.0))
            ));
        }
        let label = match fit {
            Some(f) => format!("p = {p}: slope {:.3}", f.slope),
            None => format!("p = {p}"),
        };
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{label}</text>\n",
            w - margin - 150.0,
            margin + 16.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
