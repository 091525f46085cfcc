//! Feature-level fusion: per-modality channel selection by global max
//! significance, then pooled attention vectors reduced to two convex
//! fusion scalars.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub enabled: bool,
    /// Fraction of channels retained, in `(0, 1]`.
    pub keep_fraction: f64,
}

impl SelectionConfig {
    pub fn new(enabled: bool, keep_fraction: f64) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::param("feat.keep", "must lie in (0, 1]"));
        }
        Ok(Self { enabled, keep_fraction })
    }

    /// `ceil(keep_fraction * channels)`, at least one.
    pub fn kept(&self, channels: usize) -> usize {
        // guard against 0.8 * 10 = 8.000000000000002 style overshoot
        let k = (self.keep_fraction * channels as f64 - 1e-9).ceil() as usize;
        k.clamp(1, channels.max(1))
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            keep_fraction: 0.8,
        }
    }
}

/// Axis the attention vector is pooled along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// One value per spatial position, pooled over channels.
    Spatial,
    /// One value per channel, pooled over positions.
    Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub kind: AttentionKind,
    pub vector_pool: Pool,
    pub scalar_reduce: Pool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            kind: AttentionKind::Channel,
            vector_pool: Pool::Max,
            scalar_reduce: Pool::Mean,
        }
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" | "spatial" => Ok(Self::Spatial),
            "C" | "c" | "channel" => Ok(Self::Channel),
            other => Err(Error::Config(format!("feat.type must be S or C, got `{other}`"))),
        }
    }
}

impl FromStr for Pool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!("pooling must be mean or max, got `{other}`"))),
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Spatial => "S",
            Self::Channel => "C",
        })
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Max => "max",
        })
    }
}

fn pool<T: Scalar>(values: impl Iterator<Item = T>, how: Pool) -> T {
    match how {
        Pool::Max => values.fold(T::min_value().expect("bounded"), |a, b| a.max(b)),
        Pool::Mean => {
            let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                T::zero()
            } else {
                sum / T::from_usize_lossy(n)
            }
        }
    }
}

/// Global max over positions, one value per channel.
pub fn channel_significance<T: Scalar>(f: &FeatureMap<T>) -> Vec<T> {
    (0..f.channels())
        .map(|c| pool(f.channel(c).iter().copied(), Pool::Max))
        .collect()
}

/// Zeroes all but the most significant channels; retained channels keep
/// their original index. Equal significance favours the lower index.
pub fn select_channels<T: Scalar>(f: &FeatureMap<T>, cfg: &SelectionConfig) -> FeatureMap<T> {
    if !cfg.enabled {
        return f.clone();
    }
    let sig = channel_significance(f);
    let mut order: Vec<usize> = (0..f.channels()).collect();
    order.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut out = f.clone();
    for &c in &order[cfg.kept(f.channels())..] {
        out.channel_mut(c).fill(T::zero());
    }
    out
}

/// Pooled attention vector of a feature map.
pub fn attention_vector<T: Scalar>(f: &FeatureMap<T>, cfg: &AttentionConfig) -> Vec<T> {
    match cfg.kind {
        AttentionKind::Channel => (0..f.channels())
            .map(|c| pool(f.channel(c).iter().copied(), cfg.vector_pool))
            .collect(),
        AttentionKind::Spatial => (0..f.plane_len())
            .map(|p| pool((0..f.channels()).map(|c| f.channel(c)[p]), cfg.vector_pool))
            .collect(),
    }
}

/// Convex weights `(w_rgb, w_tir)` from the reduced attention vectors.
///
/// Reduced scalars are clamped at zero so the weights stay in `[0, 1]`;
/// when both vanish the modalities are weighted equally.
pub fn fusion_scalars<T: Scalar>(v_rgb: &[T], v_tir: &[T], cfg: &AttentionConfig) -> Result<(T, T)> {
    if v_rgb.len() != v_tir.len() {
        return Err(Error::shape("fusion_scalars", v_rgb.len(), v_tir.len()));
    }
    let reduce = |v: &[T]| pool(v.iter().copied(), cfg.scalar_reduce).max(T::zero());
    let (a, b) = (reduce(v_rgb), reduce(v_tir));
    let sum = a + b;
    if sum > T::zero() {
        Ok((a / sum, b / sum))
    } else {
        let half = T::lit(0.5);
        Ok((half, half))
    }
}

/// Fused map together with the weights used.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures<T> {
    pub map: FeatureMap<T>,
    pub w_rgb: T,
    pub w_tir: T,
}

pub fn fuse_features<T: Scalar>(
    f_rgb: &FeatureMap<T>,
    f_tir: &FeatureMap<T>,
    sel: &SelectionConfig,
    att: &AttentionConfig,
) -> Result<FusedFeatures<T>> {
    f_rgb.ensure_same_shape(f_tir, "fuse_features")?;
    let rgb = select_channels(f_rgb, sel);
    let tir = select_channels(f_tir, sel);
    let (w_rgb, w_tir) = fusion_scalars(&attention_vector(&rgb, att), &attention_vector(&tir, att), att)?;
    Ok(FusedFeatures {
        map: rgb.blend(w_rgb, &tir, w_tir)?,
        w_rgb,
        w_tir,
    })
}
