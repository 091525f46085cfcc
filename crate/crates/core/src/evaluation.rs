//! Benchmark protocols and metric kernels: supervised runs with restarts,
//! accuracy, robustness, expected average overlap, the anchor-based protocol
//! and the success/precision pair.

use serde::Serialize;

use crate::data::Sequence;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::scalar::Scalar;
use crate::tracker::{FrameOutput, Tracker, TrackerState};

/// Frames skipped after a failure before the tracker is reinitialized.
pub const RESTART_GAP: usize = 5;
/// Frames after a reinitialization that do not count toward accuracy.
pub const BURN_IN: usize = 10;
/// Spacing of anchor initialization points.
pub const ANCHOR_SPACING: usize = 50;
pub const GTOT_IOU_THRESHOLD: f64 = 0.6;
pub const GTOT_DISTANCE_THRESHOLD: f64 = 5.0;

/// Anything that can be driven frame by frame against ground truth.
pub trait SequenceTracker {
    fn initialize(&mut self, frame: usize, gt: &BBox<f64>) -> Result<()>;
    /// Predicts frame `frame`; frames arrive in run order, which is
    /// descending for backward runs.
    fn update(&mut self, frame: usize) -> Result<BBox<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    /// Tracker (re)initialized from ground truth on this frame.
    Init,
    Tracked,
    /// Zero overlap with ground truth.
    Failed,
    /// Not processed: waiting for a restart, or after a terminal failure.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub name: String,
    /// Frame indices in run order.
    pub frames: Vec<usize>,
    /// Overlap per processed frame (1 on init frames, 0 on failed and skipped frames).
    pub overlaps: Vec<f64>,
    pub status: Vec<FrameStatus>,
    pub trajectory: Vec<Option<BBox<f64>>>,
    pub restarts: Vec<usize>,
    pub burn_in: usize,
}

/// One tracking episode from an (re)initialization to its failure or to the
/// end of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub overlaps: Vec<f64>,
    pub failed: bool,
}

impl RunResult {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.status.iter().filter(|s| **s == FrameStatus::Failed).count()
    }

    /// Builds a run from per-frame overlaps and statuses, for hand-made
    /// run sets and tests.
    pub fn from_parts(name: impl Into<String>, overlaps: Vec<f64>, status: Vec<FrameStatus>) -> Result<Self> {
        if overlaps.len() != status.len() {
            return Err(Error::shape("run result", overlaps.len(), status.len()));
        }
        if overlaps.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return Err(Error::param("overlaps", "values must lie in [0, 1]"));
        }
        let n = overlaps.len();
        let restarts = status
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, s)| **s == FrameStatus::Init)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            name: name.into(),
            frames: (0..n).collect(),
            overlaps,
            status,
            trajectory: vec![None; n],
            restarts,
            burn_in: BURN_IN,
        })
    }

    /// Positions (in run order) that count toward accuracy.
    pub fn valid_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut since_init: Option<usize> = None;
        let mut reinit = false;
        for (i, s) in self.status.iter().enumerate() {
            match s {
                FrameStatus::Init => {
                    reinit = i > 0;
                    since_init = Some(0);
                }
                FrameStatus::Tracked => {
                    if let Some(k) = since_init.as_mut() {
                        *k += 1;
                        if !reinit || *k > self.burn_in {
                            out.push(i);
                        }
                    }
                }
                FrameStatus::Failed | FrameStatus::Skipped => since_init = None,
            }
        }
        out
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut current: Option<Vec<f64>> = None;
        for (o, s) in self.overlaps.iter().zip(&self.status) {
            match s {
                FrameStatus::Init => {
                    if let Some(seg) = current.take() {
                        out.push(Segment { overlaps: seg, failed: false });
                    }
                    current = Some(vec![*o]);
                }
                FrameStatus::Tracked => {
                    if let Some(seg) = current.as_mut() {
                        seg.push(*o);
                    }
                }
                FrameStatus::Failed => {
                    if let Some(mut seg) = current.take() {
                        seg.push(*o);
                        out.push(Segment { overlaps: seg, failed: true });
                    }
                }
                FrameStatus::Skipped => {
                    if let Some(seg) = current.take() {
                        out.push(Segment { overlaps: seg, failed: false });
                    }
                }
            }
        }
        if let Some(seg) = current {
            out.push(Segment { overlaps: seg, failed: false });
        }
        out
    }
}

fn overlap_or_zero(pred: &BBox<f64>, gt: &BBox<f64>) -> f64 {
    let o = iou(pred, gt);
    if o.is_finite() {
        o.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Supervised run: after a frame with zero overlap the tracker sits out
/// [`RESTART_GAP`] - 1 frames and is reinitialized from ground truth on the
/// fifth frame after the failure.
pub fn run_with_restarts<S: SequenceTracker>(tracker: &mut S, name: &str, gt: &[BBox<f64>]) -> Result<RunResult> {
    if gt.is_empty() {
        return Err(Error::Data(format!("sequence `{name}` has no ground truth")));
    }
    let n = gt.len();
    let mut run = RunResult {
        name: name.to_string(),
        frames: (0..n).collect(),
        overlaps: vec![0.0; n],
        status: vec![FrameStatus::Skipped; n],
        trajectory: vec![None; n],
        restarts: Vec::new(),
        burn_in: BURN_IN,
    };
    let mut next_init = Some(0usize);
    for k in 0..n {
        if next_init == Some(k) {
            tracker.initialize(k, &gt[k])?;
            run.status[k] = FrameStatus::Init;
            run.overlaps[k] = 1.0;
            run.trajectory[k] = Some(gt[k]);
            if k > 0 {
                run.restarts.push(k);
            }
            next_init = None;
            continue;
        }
        if next_init.is_some() {
            continue;
        }
        let pred = tracker.update(k)?;
        let o = overlap_or_zero(&pred, &gt[k]);
        run.trajectory[k] = Some(pred);
        run.overlaps[k] = o;
        if o > 0.0 {
            run.status[k] = FrameStatus::Tracked;
        } else {
            run.status[k] = FrameStatus::Failed;
            next_init = Some(k + RESTART_GAP);
        }
    }
    Ok(run)
}

/// One pass from frame 0 without restarts; zero-overlap frames are marked
/// failed but tracking continues.
pub fn run_one_pass<S: SequenceTracker>(tracker: &mut S, name: &str, gt: &[BBox<f64>]) -> Result<RunResult> {
    if gt.is_empty() {
        return Err(Error::Data(format!("sequence `{name}` has no ground truth")));
    }
    let n = gt.len();
    let mut run = RunResult {
        name: name.to_string(),
        frames: (0..n).collect(),
        overlaps: vec![1.0; n],
        status: vec![FrameStatus::Init; n],
        trajectory: vec![Some(gt[0]); n],
        restarts: Vec::new(),
        burn_in: BURN_IN,
    };
    tracker.initialize(0, &gt[0])?;
    for k in 1..n {
        let pred = tracker.update(k)?;
        let o = overlap_or_zero(&pred, &gt[k]);
        run.trajectory[k] = Some(pred);
        run.overlaps[k] = o;
        run.status[k] = if o > 0.0 { FrameStatus::Tracked } else { FrameStatus::Failed };
    }
    Ok(run)
}

/// Mean overlap over every predicted frame of a run, burn-in included.
pub fn mean_overlap(run: &RunResult) -> Option<f64> {
    let (sum, n) = run
        .overlaps
        .iter()
        .zip(&run.status)
        .filter(|(_, s)| matches!(s, FrameStatus::Tracked | FrameStatus::Failed))
        .fold((0.0, 0usize), |(a, n), (o, _)| (a + o, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean over runs of [`mean_overlap`]; runs without predictions are ignored.
pub fn mean_iou(runs: &[RunResult]) -> Option<f64> {
    let per_run: Vec<f64> = runs.iter().filter_map(mean_overlap).collect();
    (!per_run.is_empty()).then(|| per_run.iter().sum::<f64>() / per_run.len() as f64)
}

/// Accuracy of one run: mean overlap over its valid frames.
pub fn run_accuracy(run: &RunResult) -> Option<f64> {
    let valid = run.valid_positions();
    if valid.is_empty() {
        return None;
    }
    Some(valid.iter().map(|&i| run.overlaps[i]).sum::<f64>() / valid.len() as f64)
}

/// Mean of per-run accuracies; runs without valid frames are ignored.
pub fn accuracy(runs: &[RunResult]) -> Result<f64> {
    let per_run: Vec<f64> = runs.iter().filter_map(run_accuracy).collect();
    if per_run.is_empty() {
        return Err(Error::Data("no valid frames for accuracy".into()));
    }
    Ok(per_run.iter().sum::<f64>() / per_run.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Robustness {
    pub failures: usize,
    pub frames: usize,
    /// One minus the failure rate per frame.
    pub inverted: f64,
}

pub fn robustness(runs: &[RunResult]) -> Robustness {
    let failures = runs.iter().map(RunResult::failures).sum();
    let frames: usize = runs.iter().map(RunResult::len).sum();
    let inverted = if frames == 0 { 1.0 } else { 1.0 - failures as f64 / frames as f64 };
    Robustness {
        failures,
        frames,
        inverted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EaoCurve {
    /// `(Ns, value)` for every length from 1 to the longest segment; `None`
    /// where no segment qualifies.
    pub values: Vec<(usize, Option<f64>)>,
    pub lo: usize,
    pub hi: usize,
    pub eao: f64,
}

impl EaoCurve {
    /// Rows inside the averaging interval.
    pub fn interval_rows(&self) -> Vec<(usize, f64)> {
        self.values
            .iter()
            .filter(|(ns, _)| (self.lo..=self.hi).contains(ns))
            .map(|(ns, v)| (*ns, v.unwrap_or(0.0)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("Ns,value\n");
        for (ns, v) in self.interval_rows() {
            s.push_str(&format!("{ns},{v}\n"));
        }
        s
    }
}

fn median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Default averaging interval: 15% to 85% of the median run length.
pub fn default_interval(runs: &[RunResult]) -> Result<(usize, usize)> {
    let mut lens: Vec<usize> = runs.iter().map(RunResult::len).collect();
    if lens.is_empty() {
        return Err(Error::Data("no runs to evaluate".into()));
    }
    let m = median(&mut lens);
    let lo = ((0.15 * m).round() as usize).max(1);
    let hi = ((0.85 * m).round() as usize).max(lo);
    Ok((lo, hi))
}

/// Expected average overlap. A segment contributes to length `Ns` when it
/// failed (its tail is padded with zeros) or is at least `Ns` frames long.
pub fn eao(runs: &[RunResult], interval: Option<(usize, usize)>) -> Result<EaoCurve> {
    if runs.is_empty() {
        return Err(Error::Data("no runs to evaluate".into()));
    }
    let (lo, hi) = match interval {
        Some(i) => i,
        None => default_interval(runs)?,
    };
    if lo == 0 || lo > hi {
        return Err(Error::param("eao interval", format!("[{lo}, {hi}] is empty")));
    }
    let segments: Vec<Segment> = runs.iter().flat_map(RunResult::segments).collect();
    let max_len = segments.iter().map(|s| s.overlaps.len()).max().unwrap_or(0).max(hi);
    let prefix: Vec<Vec<f64>> = segments
        .iter()
        .map(|s| {
            let mut p = Vec::with_capacity(s.overlaps.len() + 1);
            let mut acc = 0.0;
            p.push(acc);
            for o in &s.overlaps {
                acc += o;
                p.push(acc);
            }
            p
        })
        .collect();
    let values: Vec<(usize, Option<f64>)> = (1..=max_len)
        .map(|ns| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (seg, p) in segments.iter().zip(&prefix) {
                let len = seg.overlaps.len();
                if seg.failed || len >= ns {
                    sum += p[ns.min(len)] / ns as f64;
                    count += 1;
                }
            }
            (ns, (count > 0).then(|| sum / count as f64))
        })
        .collect();
    let inside: Vec<f64> = values[lo - 1..hi].iter().map(|(_, v)| v.unwrap_or(0.0)).collect();
    let eao = inside.iter().sum::<f64>() / inside.len() as f64;
    Ok(EaoCurve { values, lo, hi, eao })
}

/// Anchor start frames (0-based) of an `n`-frame sequence.
pub fn anchor_frames(n: usize) -> Vec<usize> {
    (0..n).step_by(ANCHOR_SPACING).collect()
}

/// True when a run from `anchor` goes backward in time.
pub fn anchor_is_backward(anchor: usize, n: usize) -> bool {
    2 * anchor >= n
}

/// Unsupervised runs from each anchor. A run goes toward the farther end of
/// the sequence and stops at its first failure.
pub fn anchor_protocol<S: SequenceTracker>(tracker: &mut S, name: &str, gt: &[BBox<f64>]) -> Result<Vec<RunResult>> {
    let n = gt.len();
    let mut runs = Vec::new();
    for a in anchor_frames(n) {
        let frames: Vec<usize> = if anchor_is_backward(a, n) {
            (0..=a).rev().collect()
        } else {
            (a..n).collect()
        };
        let m = frames.len();
        let mut run = RunResult {
            name: format!("{name}@{a}"),
            frames: frames.clone(),
            overlaps: vec![0.0; m],
            status: vec![FrameStatus::Skipped; m],
            trajectory: vec![None; m],
            restarts: Vec::new(),
            burn_in: BURN_IN,
        };
        tracker.initialize(a, &gt[a])?;
        run.status[0] = FrameStatus::Init;
        run.overlaps[0] = 1.0;
        run.trajectory[0] = Some(gt[a]);
        for (i, &k) in frames.iter().enumerate().skip(1) {
            let pred = tracker.update(k)?;
            let o = overlap_or_zero(&pred, &gt[k]);
            run.trajectory[i] = Some(pred);
            run.overlaps[i] = o;
            if o > 0.0 {
                run.status[i] = FrameStatus::Tracked;
            } else {
                run.status[i] = FrameStatus::Failed;
                break;
            }
        }
        runs.push(run);
    }
    Ok(runs)
}

/// Fractions of frames with IoU above 0.6 and center error below 5 px.
pub fn gtot_metrics(preds: &[BBox<f64>], gts: &[BBox<f64>]) -> Result<(f64, f64)> {
    if preds.len() != gts.len() {
        return Err(Error::shape("gtot metrics", gts.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::Data("no frames for success/precision".into()));
    }
    let n = preds.len() as f64;
    let success = preds.iter().zip(gts).filter(|(p, g)| iou(*p, *g) > GTOT_IOU_THRESHOLD).count();
    let precise = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.center_distance(g) < GTOT_DISTANCE_THRESHOLD)
        .count();
    Ok((success as f64 / n, precise as f64 / n))
}

/// Drives a [`Tracker`] over a loaded sequence and keeps the diagnostics of
/// every predicted frame.
pub struct SequenceRunner<'a, T: Scalar> {
    tracker: &'a Tracker<T>,
    sequence: &'a Sequence,
    state: Option<TrackerState<T>>,
    /// `(frame, output)` for every `update` call, in call order.
    pub log: Vec<(usize, FrameOutput<T>)>,
}

impl<'a, T: Scalar> SequenceRunner<'a, T> {
    pub fn new(tracker: &'a Tracker<T>, sequence: &'a Sequence) -> Self {
        Self {
            tracker,
            sequence,
            state: None,
            log: Vec::new(),
        }
    }
}

impl<T: Scalar> SequenceTracker for SequenceRunner<'_, T> {
    fn initialize(&mut self, frame: usize, gt: &BBox<f64>) -> Result<()> {
        let (rgb, tir) = self.sequence.frame::<T>(frame)?;
        self.state = Some(self.tracker.init(&rgb, &tir, &gt.cast())?);
        Ok(())
    }

    fn update(&mut self, frame: usize) -> Result<BBox<f64>> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Data("tracker updated before initialization".into()))?;
        let (rgb, tir) = self.sequence.frame::<T>(frame)?;
        let out = self.tracker.track_frame(state, &rgb, &tir)?;
        let bbox = out.bbox.cast();
        self.log.push((frame, out));
        Ok(bbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use FrameStatus::*;

    struct Echo<'a> {
        gt: &'a [BBox<f64>],
        /// Frames on which the prediction is moved far away.
        miss: Vec<usize>,
        calls: Vec<(char, usize)>,
    }

    impl SequenceTracker for Echo<'_> {
        fn initialize(&mut self, frame: usize, _gt: &BBox<f64>) -> Result<()> {
            self.calls.push(('i', frame));
            Ok(())
        }
        fn update(&mut self, frame: usize) -> Result<BBox<f64>> {
            self.calls.push(('u', frame));
            let g = self.gt[frame];
            Ok(if self.miss.contains(&frame) { g.translate(1000.0, 1000.0) } else { g })
        }
    }

    fn boxes(n: usize) -> Vec<BBox<f64>> {
        (0..n).map(|k| BBox::new(50.0 + k as f64, 40.0, 20.0, 10.0).unwrap()).collect()
    }

    #[test]
    fn echo_tracker_never_fails() {
        let gt = boxes(30);
        let mut t = Echo { gt: &gt, miss: vec![], calls: vec![] };
        let run = run_with_restarts(&mut t, "s", &gt).unwrap();
        assert_eq!(run.failures(), 0);
        assert!(run.overlaps.iter().all(|&o| o == 1.0));
        assert_eq!(accuracy(&[run]).unwrap(), 1.0);
    }

    #[test]
    fn restart_fires_five_frames_after_failure() {
        let gt = boxes(40);
        let mut t = Echo { gt: &gt, miss: vec![7, 25], calls: vec![] };
        let run = run_with_restarts(&mut t, "s", &gt).unwrap();
        assert_eq!(run.failures(), 2);
        assert_eq!(run.restarts, vec![12, 30]);
        assert_eq!(run.status[7], Failed);
        assert!((8..12).all(|k| run.status[k] == Skipped));
        assert_eq!(run.status[12], Init);
        let inits: Vec<usize> = t.calls.iter().filter(|c| c.0 == 'i').map(|c| c.1).collect();
        assert_eq!(inits, vec![0, 12, 30]);
        // burn-in: 13..=22 excluded after the restart at 12
        let valid = run.valid_positions();
        assert!(!valid.contains(&22) && valid.contains(&23) && valid.contains(&6));
        assert!(!valid.contains(&7) && !valid.contains(&0));
    }

    #[test]
    fn accuracy_examples() {
        let r = RunResult::from_parts("a", vec![1.0, 0.5, 0.7], vec![Init, Tracked, Tracked]).unwrap();
        assert_relative_eq!(accuracy(&[r]).unwrap(), 0.6, epsilon = 1e-12);
        let a = RunResult::from_parts("a", vec![1.0, 0.4, 0.4], vec![Init, Tracked, Tracked]).unwrap();
        let b = RunResult::from_parts("b", vec![1.0, 0.8], vec![Init, Tracked]).unwrap();
        assert_relative_eq!(accuracy(&[a, b]).unwrap(), 0.6, epsilon = 1e-12);
        let none = RunResult::from_parts("n", vec![1.0], vec![Init]).unwrap();
        assert!(accuracy(&[none]).is_err());
    }

    #[test]
    fn eao_examples() {
        let r = RunResult::from_parts("a", vec![1.0; 20], vec![Init; 1].into_iter().chain(vec![Tracked; 19]).collect())
            .unwrap();
        assert_eq!(eao(std::slice::from_ref(&r), Some((3, 17))).unwrap().eao, 1.0);

        // [1, 1, 0 failed]: Ns = 1 -> 1, Ns = 2 -> 1
        let f = RunResult::from_parts("f", vec![1.0, 1.0, 0.0], vec![Init, Tracked, Failed]).unwrap();
        let c = eao(std::slice::from_ref(&f), Some((1, 2))).unwrap();
        assert_eq!(c.eao, 1.0);
        // Ns = 3 -> 2/3, Ns = 4 -> 1/2
        let c = eao(std::slice::from_ref(&f), Some((3, 4))).unwrap();
        assert_relative_eq!(c.eao, (2.0 / 3.0 + 0.5) / 2.0, epsilon = 1e-15);
        assert_eq!(c.interval_rows().len(), 2);

        let one = eao(&[f.clone(), r.clone()], Some((2, 6))).unwrap();
        let two = eao(&[f.clone(), r.clone(), f, r], Some((2, 6))).unwrap();
        assert_relative_eq!(one.eao, two.eao, epsilon = 1e-15);
        assert!(eao(&[], None).is_err());
    }

    #[test]
    fn anchors_and_direction() {
        assert_eq!(anchor_frames(40), vec![0]);
        assert_eq!(anchor_frames(120), vec![0, 50, 100]);
        assert!(!anchor_is_backward(50, 120));
        assert!(anchor_is_backward(100, 120));
        assert_eq!(anchor_frames(500).len(), 10);

        let gt = boxes(120);
        let mut t = Echo { gt: &gt, miss: vec![90], calls: vec![] };
        let runs = anchor_protocol(&mut t, "s", &gt).unwrap();
        assert_eq!(runs.len(), 3);
        assert_eq!(runs[2].frames.first(), Some(&100));
        assert_eq!(runs[2].frames.last(), Some(&0));
        // forward run from 50 stops at the failure on 90
        assert_eq!(runs[1].failures(), 1);
        assert_eq!(runs[1].status[41], Skipped);
        // backward run from 100 fails at 90 as well
        assert_eq!(runs[2].status[10], Failed);
    }

    #[test]
    fn one_pass_keeps_tracking_after_failure() {
        let gt = boxes(12);
        let mut t = Echo { gt: &gt, miss: vec![3], calls: vec![] };
        let run = run_one_pass(&mut t, "s", &gt).unwrap();
        assert_eq!(run.failures(), 1);
        assert_eq!(run.status[4], Tracked);
        assert!(run.restarts.is_empty());
        assert_relative_eq!(mean_overlap(&run).unwrap(), 10.0 / 11.0, epsilon = 1e-15);
        assert_eq!(run.segments().len(), 1);
    }

    #[test]
    fn gtot_counting() {
        let gt = boxes(10);
        assert_eq!(gtot_metrics(&gt, &gt).unwrap(), (1.0, 1.0));
        let far: Vec<_> = gt.iter().map(|b| b.translate(500.0, 0.0)).collect();
        assert_eq!(gtot_metrics(&far, &gt).unwrap(), (0.0, 0.0));
        assert!(gtot_metrics(&gt[..3], &gt).is_err());
    }
}
