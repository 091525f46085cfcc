//! Shared evaluation driver of `track`, `eval` and `ablate`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use rgbt::config::{Config, EvalConfig, Protocol};
use rgbt::data::{load_dataset, Sequence};
use rgbt::evaluation::{
    accuracy, anchor_protocol, eao, gtot_metrics, mean_iou, robustness, run_one_pass, run_with_restarts, EaoCurve,
    FrameStatus, RunResult, SequenceRunner,
};
use rgbt::report::{summary_json, svg_lines, to_json_lines, write_atomic, FrameRecord, Summary};
use rgbt::tracker::{FusionMode, Tracker};
use rgbt::Scalar;

use crate::projection::load_or_train;
use crate::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVE_FILE: &str = "eao_curve.csv";

/// Runs and per-frame records of one protocol over a dataset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub records: Vec<FrameRecord>,
    pub runs: Vec<RunResult>,
    /// Per-sequence mean success and precision rates (one-pass protocol only).
    pub success_precision: Option<(f64, f64)>,
}

pub fn load(dataset: &Path) -> CliResult<Vec<Sequence>> {
    Ok(load_dataset(dataset)?)
}

pub fn make_tracker<T: Scalar>(cfg: &Config, cache: &Path) -> CliResult<Tracker<T>> {
    let tcfg = cfg.tracker::<T>()?;
    let projection = if tcfg.mode == FusionMode::Pixel {
        Some(load_or_train::<T>(&cfg.pixel_training()?, cache)?)
    } else {
        None
    };
    Ok(Tracker::new(tcfg, projection)?)
}

fn records_for<T: Scalar>(run: &RunResult, seq: &str, log: &[(usize, rgbt::tracker::FrameOutput<T>)]) -> Vec<FrameRecord> {
    let mut predicted = log.iter();
    let mut out = Vec::new();
    for (i, status) in run.status.iter().enumerate() {
        let frame = run.frames[i];
        match status {
            FrameStatus::Init => {
                if let Some(b) = &run.trajectory[i] {
                    out.push(FrameRecord::init(seq, frame, b));
                }
            }
            FrameStatus::Tracked | FrameStatus::Failed => {
                if let Some((f, o)) = predicted.next() {
                    debug_assert_eq!(*f, frame);
                    out.push(FrameRecord::tracked(seq, frame, o));
                }
            }
            FrameStatus::Skipped => {}
        }
    }
    out
}

/// Runs, records and success/precision of one sequence.
type SequenceEval = (Vec<RunResult>, Vec<FrameRecord>, Option<(f64, f64)>);

fn evaluate_sequence<T: Scalar>(
    tracker: &Tracker<T>,
    seq: &Sequence,
    protocol: Protocol,
    burn_in: usize,
) -> CliResult<SequenceEval> {
    let gt = seq.gt_boxes()?;
    let mut runner = SequenceRunner::new(tracker, seq);
    let mut runs = match protocol {
        Protocol::Restarts => vec![run_with_restarts(&mut runner, &seq.name, &gt)?],
        Protocol::Anchors => anchor_protocol(&mut runner, &seq.name, &gt)?,
        Protocol::OnePass => vec![run_one_pass(&mut runner, &seq.name, &gt)?],
    };
    let mut records = Vec::new();
    let mut consumed = 0;
    for run in runs.iter_mut() {
        run.burn_in = burn_in;
        let predicted = run
            .status
            .iter()
            .filter(|s| matches!(s, FrameStatus::Tracked | FrameStatus::Failed))
            .count();
        records.extend(records_for(run, &run.name, &runner.log[consumed..consumed + predicted]));
        consumed += predicted;
    }
    let sp = if protocol == Protocol::OnePass {
        let run = &runs[0];
        let preds: Vec<_> = run.trajectory[1..].iter().map(|b| b.expect("one-pass run predicts every frame")).collect();
        if preds.is_empty() {
            None
        } else {
            Some(gtot_metrics(&preds, &gt[1..])?)
        }
    } else {
        None
    };
    Ok((runs, records, sp))
}

/// Evaluates every sequence, in parallel, keeping dataset order.
pub fn evaluate<T: Scalar>(tracker: &Tracker<T>, seqs: &[Sequence], eval: &EvalConfig) -> CliResult<Evaluation> {
    let per_seq = seqs
        .par_iter()
        .map(|s| evaluate_sequence(tracker, s, eval.protocol, eval.burn_in))
        .collect::<Vec<_>>();
    let mut ev = Evaluation {
        records: Vec::new(),
        runs: Vec::new(),
        success_precision: None,
    };
    let mut sp = Vec::new();
    for r in per_seq {
        let (runs, records, s) = r?;
        ev.runs.extend(runs);
        ev.records.extend(records);
        sp.extend(s);
    }
    if !sp.is_empty() {
        let n = sp.len() as f64;
        ev.success_precision = Some((
            sp.iter().map(|p| p.0).sum::<f64>() / n,
            sp.iter().map(|p| p.1).sum::<f64>() / n,
        ));
    }
    Ok(ev)
}

pub fn summarize(
    ev: &Evaluation,
    cfg: &Config,
    eval: &EvalConfig,
    curve_csv_path: Option<String>,
) -> CliResult<(Summary, EaoCurve)> {
    let curve = eao(&ev.runs, eval.interval)?;
    let r = robustness(&ev.runs);
    let miou = mean_iou(&ev.runs).unwrap_or(0.0);
    let a = match eval.protocol {
        Protocol::OnePass => miou,
        _ => accuracy(&ev.runs).unwrap_or(0.0),
    };
    let mut summary = Summary {
        accuracy: a,
        failures: r.failures,
        robustness: r.inverted,
        eao: curve.eao,
        curve_csv_path,
        success: ev.success_precision.map(|p| p.0),
        precision: ev.success_precision.map(|p| p.1),
        mean_iou: miou,
        sequences: ev.runs.iter().map(|r| r.name.split('@').next().unwrap_or("")).collect::<BTreeSet<_>>().len(),
        frames: r.frames,
        config: cfg.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    };
    summary.config.insert("eval.protocol".into(), protocol_name(eval.protocol).into());
    Ok((summary, curve))
}

pub fn write_outputs(out: &Path, ev: &Evaluation, cfg: &Config, eval: &EvalConfig) -> CliResult<Summary> {
    let curve_path: PathBuf = out.join(CURVE_FILE);
    let (summary, curve) = summarize(ev, cfg, eval, Some(curve_path.display().to_string()))?;
    write_atomic(&out.join(RESULTS_FILE), to_json_lines(&ev.records).as_bytes())?;
    write_atomic(&curve_path, curve.to_csv().as_bytes())?;
    let points: Vec<(f64, f64)> = curve.interval_rows().iter().map(|&(n, v)| (n as f64, v)).collect();
    write_atomic(
        &out.join("eao_curve.svg"),
        svg_lines("Expected overlap", "sequence length", &[("EAO curve", points)]).as_bytes(),
    )?;
    write_atomic(&out.join(SUMMARY_FILE), summary_json(&summary).as_bytes())?;
    Ok(summary)
}

fn run_protocol<T: Scalar>(cfg: &Config, eval: &EvalConfig, seqs: &[Sequence], out: &Path) -> CliResult<Summary> {
    let tracker = make_tracker::<T>(cfg, &out.join(".cache"))?;
    let ev = evaluate(&tracker, seqs, eval)?;
    write_outputs(out, &ev, cfg, eval)
}

fn report(summary: &Summary, out: &Path) {
    println!(
        "A={:.4} R_failures={} R_inverted={:.4} EAO={:.4} mean_iou={:.4} -> {}",
        summary.accuracy,
        summary.failures,
        summary.robustness,
        summary.eao,
        summary.mean_iou,
        out.display()
    );
    if let (Some(s), Some(p)) = (summary.success, summary.precision) {
        println!("success={s:.4} precision={p:.4}");
    }
}

fn dispatch(cfg: &Config, eval: &EvalConfig, dataset: &Path, out: &Path, single: bool) -> CliResult<()> {
    let seqs = load(dataset)?;
    let summary = if !single {
        run_protocol::<f64>(cfg, eval, &seqs, out)?
    } else {
        run_protocol::<f32>(cfg, eval, &seqs, out)?
    };
    report(&summary, out);
    Ok(())
}

pub fn cmd_track(cfg: &Config, dataset: &Path, out: &Path, single: bool) -> CliResult<()> {
    let eval = EvalConfig {
        protocol: Protocol::OnePass,
        ..cfg.eval()?
    };
    dispatch(cfg, &eval, dataset, out, single)
}

pub fn cmd_eval(cfg: &Config, dataset: &Path, out: &Path, single: bool) -> CliResult<()> {
    dispatch(cfg, &cfg.eval()?, dataset, out, single)
}

pub fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Restarts => "restarts",
        Protocol::Anchors => "anchors",
        Protocol::OnePass => "ope",
    }
}

pub(crate) fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}
