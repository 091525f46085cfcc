//! Result files: per-frame JSON lines, run summaries, CSV tables and small
//! SVG line plots. Every writer goes through [`write_atomic`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;
use crate::tracker::FrameOutput;

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub seq: String,
    pub frame: usize,
    /// `[x, y, w, h]` with `(x, y)` the top-left corner.
    pub bbox: [f64; 4],
    pub score: Option<f64>,
    pub lambda12: Option<f64>,
    pub lambda22: Option<f64>,
    pub bias_gap: Option<f64>,
    /// Gap of the cross-weighted terms, on the raw score scale.
    pub modulated_gap: Option<f64>,
}

impl FrameRecord {
    pub fn init(seq: &str, frame: usize, bbox: &BBox<f64>) -> Self {
        Self {
            seq: seq.to_string(),
            frame,
            bbox: bbox.xywh(),
            score: None,
            lambda12: None,
            lambda22: None,
            bias_gap: None,
            modulated_gap: None,
        }
    }

    pub fn tracked<T: Scalar>(seq: &str, frame: usize, out: &FrameOutput<T>) -> Self {
        let f = |v: Option<T>| v.map(Scalar::as_f64);
        Self {
            seq: seq.to_string(),
            frame,
            bbox: out.bbox.cast::<f64>().xywh(),
            score: Some(out.score.as_f64()),
            lambda12: f(out.lambda12),
            lambda22: f(out.lambda22),
            bias_gap: f(out.bias_gap),
            modulated_gap: f(out.modulated_gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "A")]
    pub accuracy: f64,
    #[serde(rename = "R_failures")]
    pub failures: usize,
    #[serde(rename = "R_inverted")]
    pub robustness: f64,
    #[serde(rename = "EAO")]
    pub eao: f64,
    pub curve_csv_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub success: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<f64>,
    /// Mean overlap over every predicted frame.
    pub mean_iou: f64,
    pub sequences: usize,
    pub frames: usize,
    /// Effective configuration of the run.
    pub config: BTreeMap<String, String>,
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Data(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp: PathBuf = path.with_file_name(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn to_json_lines(records: &[FrameRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn read_json_lines(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// CSV with a header row; values use the shortest round-trip formatting.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Minimal standalone SVG with one polyline per series.
pub fn svg_lines(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n\
         <line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n\
         <text x=\"{M}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{x0:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{x1:.3}</text>\n\
         <text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{y0:.3}</text>\n\
         <text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{y1:.3}</text>\n",
        W / 2.0,
        escape(title),
        H - M,
        W - M,
        H - M,
        H - M,
        W / 2.0,
        H - 12.0,
        escape(x_label),
        H - M + 14.0,
        W - M,
        H - M + 14.0,
        H - M,
        M + 4.0,
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            W - M - 120.0,
            M + 14.0 * (i as f64 + 1.0),
            escape(name)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
