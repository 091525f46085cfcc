//! One-axis sweeps: scaling factor, fusion mode, feature-fusion grid and
//! pixel fusion level.

use std::path::Path;

use rgbt::config::Config;
use rgbt::data::Sequence;
use rgbt::report::{csv_table, svg_lines, write_atomic, Summary};
use rgbt::tracker::FusionMode;
use rgbt::Scalar;

use crate::args::Axis;
use crate::harness::{evaluate, load, make_tracker, summarize};
use crate::{CliError, CliResult};

pub const ABLATION_FILE: &str = "ablation.csv";

/// One grid point: its label and the config overrides it stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub overrides: Vec<(&'static str, String)>,
}

fn point(label: impl Into<String>, overrides: Vec<(&'static str, String)>) -> GridPoint {
    GridPoint {
        label: label.into(),
        overrides,
    }
}

/// `s` from 0.44 to 0.53 in steps of 0.01.
pub fn default_s_values() -> Vec<String> {
    (44..=53).map(|k| format!("0.{k}")).collect()
}

fn split(values: &str) -> Vec<String> {
    values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect()
}

/// Expands an axis into grid points. Feature grid values read
/// `selection/type/vector/scalar`, e.g. `true/C/max/mean`.
pub fn grid(axis: Axis, values: Option<&str>) -> CliResult<Vec<GridPoint>> {
    let given = values.map(split);
    let points: Vec<GridPoint> = match axis {
        Axis::S => given
            .unwrap_or_else(default_s_values)
            .into_iter()
            .map(|v| point(v.clone(), vec![("fusion.s", v)]))
            .collect(),
        Axis::FusionMode => given
            .unwrap_or_else(|| FusionMode::ALL.iter().map(|m| m.to_string()).collect())
            .into_iter()
            .map(|v| point(v.clone(), vec![("fusion.mode", v)]))
            .collect(),
        Axis::FeatGrid => {
            let values = given.unwrap_or_else(|| {
                let mut all = Vec::new();
                for sel in ["false", "true"] {
                    for ty in ["S", "C"] {
                        for vec in ["mean", "max"] {
                            for sc in ["mean", "max"] {
                                all.push(format!("{sel}/{ty}/{vec}/{sc}"));
                            }
                        }
                    }
                }
                all
            });
            values
                .into_iter()
                .map(|v| {
                    let parts: Vec<&str> = v.split('/').collect();
                    if parts.len() != 4 {
                        return Err(CliError::Config(format!(
                            "feat.grid value `{v}` must read selection/type/vector/scalar"
                        )));
                    }
                    Ok(point(
                        v.clone(),
                        vec![
                            ("fusion.mode", "feature".to_string()),
                            ("feat.selection", parts[0].to_string()),
                            ("feat.type", parts[1].to_string()),
                            ("feat.vector", parts[2].to_string()),
                            ("feat.scalar", parts[3].to_string()),
                        ],
                    ))
                })
                .collect::<CliResult<_>>()?
        }
        Axis::PixelLevel => given
            .unwrap_or_else(|| (1..=4).map(|l| l.to_string()).collect())
            .into_iter()
            .map(|v| point(v.clone(), vec![("fusion.mode", "pixel".to_string()), ("pixel.level", v)]))
            .collect(),
    };
    if points.is_empty() {
        return Err(CliError::Config("ablation grid is empty".into()));
    }
    Ok(points)
}

pub fn run_point<T: Scalar>(base: &Config, p: &GridPoint, seqs: &[Sequence], cache: &Path) -> CliResult<Summary> {
    let mut cfg = base.clone();
    for (k, v) in &p.overrides {
        cfg.set(k, v)?;
    }
    let eval = cfg.eval()?;
    let tracker = make_tracker::<T>(&cfg, cache)?;
    let ev = evaluate(&tracker, seqs, &eval)?;
    Ok(summarize(&ev, &cfg, &eval, None)?.0)
}

pub fn cmd_ablate(cfg: &Config, dataset: &Path, out: &Path, axis: Axis, values: Option<&str>, single: bool) -> CliResult<()> {
    let points = grid(axis, values)?;
    // validate every point before spending time on any of them
    for p in &points {
        let mut c = cfg.clone();
        for (k, v) in &p.overrides {
            c.set(k, v)?;
        }
        c.tracker::<f64>()?;
    }
    let seqs = load(dataset)?;
    let cache = out.join(".cache");
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for p in &points {
        let s = if !single {
            run_point::<f64>(cfg, p, &seqs, &cache)?
        } else {
            run_point::<f32>(cfg, p, &seqs, &cache)?
        };
        println!(
            "{:<24} A={:.4} R_failures={} R_inverted={:.4} EAO={:.4} mean_iou={:.4}",
            p.label, s.accuracy, s.failures, s.robustness, s.eao, s.mean_iou
        );
        rows.push(vec![
            p.label.clone(),
            s.accuracy.to_string(),
            s.failures.to_string(),
            s.robustness.to_string(),
            s.eao.to_string(),
            s.mean_iou.to_string(),
        ]);
        summaries.push(s);
    }
    let header = ["value", "A", "R_failures", "R_inverted", "EAO", "mean_iou"];
    write_atomic(&out.join(ABLATION_FILE), csv_table(&header, &rows).as_bytes())?;
    let x: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| if axis == Axis::S { p.label.parse().unwrap_or(i as f64) } else { i as f64 })
        .collect();
    let series = |f: fn(&Summary) -> f64| x.iter().zip(&summaries).map(|(&x, s)| (x, f(s))).collect::<Vec<_>>();
    let x_label = match axis {
        Axis::S => "scaling factor s",
        _ => "grid point",
    };
    write_atomic(
        &out.join("ablation.svg"),
        svg_lines("Ablation", x_label, &[("EAO", series(|s| s.eao)), ("mean IoU", series(|s| s.mean_iou))]).as_bytes(),
    )?;
    Ok(())
}
