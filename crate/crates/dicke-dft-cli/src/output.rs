//! Deterministic output writing: CSV with 17-significant-digit floats and LF
//! line endings, JSON summaries, a dependency-free SVG plotter, and the
//! per-run metadata sidecar.
//!
//! Commands build all their files in memory first and write only after the
//! whole computation succeeded, so failures leave no partial files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

/// 17 significant digits, enough to round-trip an f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvBuilder {
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        CsvBuilder {
            buf: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn float_row(&mut self, values: &[f64]) {
        let fields: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
        self.row(&fields);
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// A file scheduled for writing.
pub struct OutputFile {
    pub name: String,
    pub content: String,
}

impl OutputFile {
    pub fn new(name: impl Into<String>, content: String) -> Self {
        OutputFile {
            name: name.into(),
            content,
        }
    }

    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Result<Self, String> {
        let mut content =
            serde_json::to_string_pretty(value).map_err(|e| format!("json encode: {e}"))?;
        content.push('\n');
        Ok(OutputFile {
            name: name.into(),
            content,
        })
    }
}

/// Run metadata attached to every command invocation.
#[derive(Serialize)]
pub struct Sidecar<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub version: &'a str,
    pub wall_time_seconds: f64,
}

pub fn write_all(out_dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>, String> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
    let mut written = Vec::with_capacity(files.len());
    for f in files {
        let path = out_dir.join(&f.name);
        let mut handle = std::fs::File::create(&path)
            .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
        handle
            .write_all(f.content.as_bytes())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// SVG plotting
// ---------------------------------------------------------------------------

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Self-contained SVG with one polyline per labelled series.
pub fn svg_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let width = 820.0;
    let height = 620.0;
    let ml = 80.0;
    let mr = 30.0;
    let mt = 50.0;
    let mb = 70.0;
    let pw = width - ml - mr;
    let ph = height - mt - mb;

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    let ypad = 0.05 * (ymax - ymin).max(1e-12);
    ymin -= ypad;
    ymax += ypad;

    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| mt + (ymax - y) / (ymax - ymin) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"14\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{}</text>\n",
        ml + pw / 2.0,
        title
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    // ticks
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let px = sx(fx);
        svg.push_str(&format!(
            "  <line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            mt + ph,
            mt + ph + 6.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{fx:.2}</text>\n",
            mt + ph + 24.0
        ));
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        let py = sy(fy);
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{ml}\" y2=\"{py:.1}\" stroke=\"black\"/>\n",
            ml - 6.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{fy:.3}</text>\n",
            ml - 10.0,
            py + 5.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        ml + pw / 2.0,
        height - 18.0
    ));
    svg.push_str(&format!(
        "  <text x=\"22\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 22 {:.1})\">{y_label}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    for (idx, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = mt + 16.0 + 20.0 * idx as f64;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            ml + pw - 150.0,
            ml + pw - 120.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\">{label}</text>\n",
            ml + pw - 112.0,
            ly + 5.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
