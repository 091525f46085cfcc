use std::fs;
use std::path::{Path, PathBuf};

use rgbt::report::{csv_table, read_json_lines, read_summary, svg_lines, write_atomic};

use crate::harness::{CURVE_FILE, RESULTS_FILE, SUMMARY_FILE};
use crate::{CliError, CliResult};

pub const BIAS_FILE: &str = "bias_gap.csv";

/// Bias gap before and after modulation, one row per frame that has both.
pub fn bias_rows(results: &Path) -> CliResult<Vec<(f64, f64)>> {
    Ok(read_json_lines(results)?
        .iter()
        .filter_map(|r| Some((r.bias_gap?, r.modulated_gap?)))
        .collect())
}

fn parse_curve(path: &Path) -> CliResult<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let bad = || CliError::Data(format!("{}:{}: malformed row `{l}`", path.display(), i + 2));
            let (a, b) = l.split_once(',').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn cmd_plotdata(results: &Path, out: &Path) -> CliResult<()> {
    let rows = bias_rows(&results.join(RESULTS_FILE))?;
    let table: Vec<Vec<String>> = rows.iter().map(|(a, b)| vec![a.to_string(), b.to_string()]).collect();
    write_atomic(&out.join(BIAS_FILE), csv_table(&["original", "modulated"], &table).as_bytes())?;
    let idx = |f: fn(&(f64, f64)) -> f64| rows.iter().enumerate().map(|(i, r)| (i as f64, f(r))).collect::<Vec<_>>();
    write_atomic(
        &out.join("bias_gap.svg"),
        svg_lines(
            "Score bias between modalities",
            "frame",
            &[("original", idx(|r| r.0)), ("modulated", idx(|r| r.1))],
        )
        .as_bytes(),
    )?;

    let summary = read_summary(&results.join(SUMMARY_FILE))?;
    let recorded = summary.curve_csv_path.map(PathBuf::from);
    let curve_path = match recorded {
        Some(p) if p.is_file() => p,
        _ => results.join(CURVE_FILE),
    };
    let curve = parse_curve(&curve_path)?;
    let table: Vec<Vec<String>> = curve.iter().map(|(n, v)| vec![n.to_string(), v.to_string()]).collect();
    write_atomic(&out.join(CURVE_FILE), csv_table(&["Ns", "value"], &table).as_bytes())?;
    let points = curve.iter().map(|&(n, v)| (n as f64, v)).collect();
    write_atomic(
        &out.join("eao_curve.svg"),
        svg_lines("Expected overlap", "sequence length", &[("EAO curve", points)]).as_bytes(),
    )?;
    println!("{} bias rows, {} curve rows -> {}", rows.len(), curve.len(), out.display());
    Ok(())
}
