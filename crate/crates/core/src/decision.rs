//! De-biased decision-level fusion of per-modality RPN outputs, softmax
//! normalization and the postprocessor that turns fused maps into a box.
//!
//! Classification maps of the two modalities are cross-weighted: the RGB
//! map is multiplied by the mean positive thermal score and vice versa, so
//! both contribute at matched magnitude. The weighted sum is then shrunk by
//! the sum of the two means and scaled by `s`:
//!
//! ```text
//! B_F = (l11 * B_rgb + l21 * B_tir) / (l11 + l21)
//! C_F = s * (l12 * C_rgb + l22 * C_tir) / (l12 + l22)
//! l12 = mean{C_tir > 0},  l22 = mean{C_rgb > 0}
//! ```
//!
//! Foreground scores are rectified at zero before weighting; the background
//! channel is weighted the same way but left unrectified.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{decode, AnchorGrid, BBox};
use crate::scalar::{argmax, Scalar};
use crate::siamese::HeadOutput;
use crate::tensor::{ClsMap, RegMap};

/// Weight used for a modality whose map has no positive entry.
pub const EMPTY_POSITIVE_FALLBACK: f64 = 1e-6;

/// Arithmetic mean over strictly positive entries, or
/// [`EMPTY_POSITIVE_FALLBACK`] when there are none.
pub fn positive_mean<T: Scalar>(values: &[T]) -> T {
    let (sum, n) = values
        .iter()
        .filter(|&&v| v > T::zero())
        .fold((T::zero(), 0usize), |(s, n), &v| (s + v, n + 1));
    if n == 0 {
        T::lit(EMPTY_POSITIVE_FALLBACK)
    } else {
        sum / T::from_usize_lossy(n)
    }
}

/// Fixed and data-dependent weights of one fusion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights<T> {
    /// Regression weight of RGB.
    pub lambda11: T,
    /// Regression weight of TIR.
    pub lambda21: T,
    /// Classification weight of RGB (mean positive TIR score).
    pub lambda12: T,
    /// Classification weight of TIR (mean positive RGB score).
    pub lambda22: T,
    /// Scaling factor applied after the shrink.
    pub s: T,
}

impl<T: Scalar> FusionWeights<T> {
    /// Fixed part of the weights; the classification weights start equal.
    pub fn new(lambda11: T, lambda21: T, s: T) -> Result<Self> {
        if lambda11 < T::zero() || lambda21 < T::zero() || !(lambda11 + lambda21 > T::zero()) {
            return Err(Error::param("fusion.lambda", "lambda11, lambda21 must be nonnegative and not both zero"));
        }
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::param("fusion.s", "scaling factor must be positive"));
        }
        Ok(Self {
            lambda11,
            lambda21,
            lambda12: T::one(),
            lambda22: T::one(),
            s,
        })
    }

    pub fn with_debias(self, lambda12: T, lambda22: T) -> Self {
        Self {
            lambda12,
            lambda22,
            ..self
        }
    }
}

impl<T: Scalar> Default for FusionWeights<T> {
    fn default() -> Self {
        let half = T::lit(0.5);
        Self::new(half, half, half).expect("default weights are valid")
    }
}

fn ensure_cls_match<T: Scalar>(a: &ClsMap<T>, b: &ClsMap<T>, context: &'static str) -> Result<()> {
    a.as_map().ensure_same_shape(b.as_map(), context)
}

/// `(lambda12, lambda22)`: positive mean of the TIR and RGB foreground maps.
pub fn debias_weights<T: Scalar>(c_rgb: &ClsMap<T>, c_tir: &ClsMap<T>) -> Result<(T, T)> {
    ensure_cls_match(c_rgb, c_tir, "debias_weights")?;
    Ok((positive_mean(c_tir.foreground()), positive_mean(c_rgb.foreground())))
}

/// Cross-weighted, shrunk and scaled classification fusion using the
/// classification weights stored in `w`.
pub fn fuse_classification<T: Scalar>(c_rgb: &ClsMap<T>, c_tir: &ClsMap<T>, w: &FusionWeights<T>) -> Result<ClsMap<T>> {
    ensure_cls_match(c_rgb, c_tir, "fuse_classification")?;
    if !(w.s > T::zero()) {
        return Err(Error::param("fusion.s", "scaling factor must be positive"));
    }
    let denom = w.lambda12 + w.lambda22;
    if !(denom > T::zero()) {
        return Err(Error::param("fusion.lambda", "lambda12 + lambda22 must be positive"));
    }
    let (a, b) = (w.lambda12, w.lambda22);
    let fuse = |x: T, y: T| w.s * (a * x + b * y) / denom;
    let relu = |v: T| if v > T::zero() { v } else { T::zero() };

    let mut out = c_rgb.clone();
    let (bg, fg) = out.parts_mut();
    for ((o, &x), &y) in bg.iter_mut().zip(c_rgb.background()).zip(c_tir.background()) {
        *o = fuse(x, y);
    }
    for ((o, &x), &y) in fg.iter_mut().zip(c_rgb.foreground()).zip(c_tir.foreground()) {
        *o = fuse(relu(x), relu(y));
    }
    Ok(out)
}

/// `(l11 * B_rgb + l21 * B_tir) / (l11 + l21)`.
pub fn fuse_regression<T: Scalar>(b_rgb: &RegMap<T>, b_tir: &RegMap<T>, w: &FusionWeights<T>) -> Result<RegMap<T>> {
    let denom = w.lambda11 + w.lambda21;
    if !(denom > T::zero()) {
        return Err(Error::param("fusion.lambda", "lambda11 + lambda21 must be positive"));
    }
    let fused = b_rgb.as_map().blend(w.lambda11 / denom, b_tir.as_map(), w.lambda21 / denom)?;
    RegMap::new(fused)
}

/// Fused outputs plus the weights that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDecision<T> {
    pub cls: ClsMap<T>,
    pub reg: RegMap<T>,
    pub weights: FusionWeights<T>,
    /// Positive-mean gap between the RGB and TIR foreground scores.
    pub bias_gap: T,
}

/// Full de-biased fusion of two head outputs.
pub fn fuse_decision<T: Scalar>(rgb: &HeadOutput<T>, tir: &HeadOutput<T>, fixed: &FusionWeights<T>) -> Result<FusedDecision<T>> {
    let (l12, l22) = debias_weights(&rgb.cls, &tir.cls)?;
    let weights = fixed.with_debias(l12, l22);
    Ok(FusedDecision {
        cls: fuse_classification(&rgb.cls, &tir.cls, &weights)?,
        reg: fuse_regression(&rgb.reg, &tir.reg, &weights)?,
        weights,
        bias_gap: bias_gap(&rgb.cls, &tir.cls)?,
    })
}

/// Plain elementwise averaging of both branches.
pub fn average_decision<T: Scalar>(rgb: &HeadOutput<T>, tir: &HeadOutput<T>) -> Result<HeadOutput<T>> {
    let half = T::lit(0.5);
    Ok(HeadOutput {
        cls: ClsMap::new(rgb.cls.as_map().blend(half, tir.cls.as_map(), half)?)?,
        reg: RegMap::new(rgb.reg.as_map().blend(half, tir.reg.as_map(), half)?)?,
    })
}

/// Softmax over each `(background, foreground)` pair; returns the
/// foreground probability per location.
pub fn normalize<T: Scalar>(c: &ClsMap<T>) -> Vec<T> {
    c.background()
        .iter()
        .zip(c.foreground())
        .map(|(&bg, &fg)| {
            // logistic of the difference; stable for either sign
            let d = fg - bg;
            if d >= T::zero() {
                T::one() / (T::one() + (-d).exp())
            } else {
                let e = d.exp();
                e / (T::one() + e)
            }
        })
        .collect()
}

/// Fuses after normalization: both softmax outputs averaged with equal weight.
pub fn fuse_after_norm<T: Scalar>(c_rgb: &ClsMap<T>, c_tir: &ClsMap<T>) -> Result<Vec<T>> {
    ensure_cls_match(c_rgb, c_tir, "fuse_after_norm")?;
    let half = T::lit(0.5);
    Ok(normalize(c_rgb)
        .into_iter()
        .zip(normalize(c_tir))
        .map(|(a, b)| half * (a + b))
        .collect())
}

/// `positive_mean(fg RGB) - positive_mean(fg TIR)`.
pub fn bias_gap<T: Scalar>(c_rgb: &ClsMap<T>, c_tir: &ClsMap<T>) -> Result<T> {
    ensure_cls_match(c_rgb, c_tir, "bias_gap")?;
    Ok(positive_mean(c_rgb.foreground()) - positive_mean(c_tir.foreground()))
}

/// Gap between the positive means of the cross-weighted terms
/// `lambda12 * C_rgb` and `lambda22 * C_tir`, divided by the shrink
/// `lambda12 + lambda22` so it is on the scale of the raw scores.
pub fn modulated_gap<T: Scalar>(c_rgb: &ClsMap<T>, c_tir: &ClsMap<T>) -> Result<T> {
    let (l12, l22) = debias_weights(c_rgb, c_tir)?;
    let denom = l12 + l22;
    let weighted = |m: &ClsMap<T>, k: T| -> Vec<T> { m.foreground().iter().map(|&v| k * v / denom).collect() };
    Ok(positive_mean(&weighted(c_rgb, l12)) - positive_mean(&weighted(c_tir, l22)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig<T> {
    /// Mixing weight of the cosine window in `[0, 1]`.
    pub window_influence: T,
    /// Strength of the shape-change penalty.
    pub penalty_k: T,
    /// Interpolation rate of the box size toward the selected candidate.
    pub size_lr: T,
}

impl<T: Scalar> PostprocessConfig<T> {
    pub fn new(window_influence: T, penalty_k: T, size_lr: T) -> Result<Self> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(window_influence) {
            return Err(Error::param("post.window_influence", "must lie in [0, 1]"));
        }
        if !(penalty_k >= T::zero()) {
            return Err(Error::param("post.penalty_k", "must be nonnegative"));
        }
        if !unit(size_lr) {
            return Err(Error::param("post.size_lr", "must lie in [0, 1]"));
        }
        Ok(Self {
            window_influence,
            penalty_k,
            size_lr,
        })
    }
}

impl<T: Scalar> Default for PostprocessConfig<T> {
    fn default() -> Self {
        Self::new(T::lit(0.4), T::lit(0.04), T::lit(0.32)).expect("defaults are valid")
    }
}

/// Outer product of two Hann windows, one value per `(row, col)`.
pub fn hann_window<T: Scalar>(rows: usize, cols: usize) -> Vec<T> {
    let hann = |n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect()
    };
    let (r, c) = (hann(rows), hann(cols));
    r.iter().flat_map(|&a| c.iter().map(move |&b| T::lit(a * b))).collect()
}

fn size_measure<T: Scalar>(w: T, h: T) -> T {
    let pad = (w + h) * T::lit(0.5);
    ((w + pad) * (h + pad)).sqrt()
}

fn change<T: Scalar>(r: T) -> T {
    r.max(T::one() / r)
}

/// Outcome of postprocessing one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection<T> {
    pub bbox: BBox<T>,
    /// Flat `A*H*W` index of the winning anchor.
    pub index: usize,
    /// Penalized, windowed score of the winner.
    pub score: T,
    /// Raw foreground probability of the winner.
    pub prob: T,
}

/// Penalized, window-mixed argmax over decoded candidates.
///
/// `prev` must be expressed in the same coordinates as the anchors. The
/// returned box takes its center from the winning candidate and its size
/// from `prev` interpolated toward the candidate by `size_lr`.
pub fn postprocess<T: Scalar>(
    prob: &[T],
    reg: &RegMap<T>,
    anchors: &AnchorGrid<T>,
    prev: &BBox<T>,
    cfg: &PostprocessConfig<T>,
) -> Result<Selection<T>> {
    if prob.is_empty() || anchors.is_empty() {
        return Err(Error::Data("postprocess on an empty score map".into()));
    }
    if prob.len() != anchors.len() {
        return Err(Error::shape("postprocess", anchors.len(), prob.len()));
    }
    let candidates = decode(reg, anchors)?;
    let (rows, cols) = anchors.spatial;
    let window = hann_window::<T>(rows, cols);
    let plane = rows * cols;
    let wi = cfg.window_influence;
    let prev_ratio = prev.w / prev.h;
    let prev_size = size_measure(prev.w, prev.h);

    let pscore: Vec<T> = candidates
        .iter()
        .zip(prob)
        .enumerate()
        .map(|(k, (cand, &p))| {
            let r = change(prev_ratio / (cand.w / cand.h));
            let sc = change(size_measure(cand.w, cand.h) / prev_size);
            let penalty = (-(cfg.penalty_k * (r * sc - T::one()))).exp();
            p * penalty * (T::one() - wi) + window[k % plane] * wi
        })
        .collect();

    let index = argmax(&pscore).ok_or_else(|| Error::Data("no finite score".into()))?;
    let sel = candidates[index];
    let lr = cfg.size_lr;
    let keep = T::one() - lr;
    let bbox = BBox::new(sel.cx, sel.cy, keep * prev.w + lr * sel.w, keep * prev.h + lr * sel.h)?;
    Ok(Selection {
        bbox,
        index,
        score: pscore[index],
        prob: prob[index],
    })
}
