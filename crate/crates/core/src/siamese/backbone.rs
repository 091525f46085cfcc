use rand_distr::{Distribution, Normal};

use super::weight_rng;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

/// Number of tapped backbone stages (layers 2, 3 and 4).
pub const NUM_TAPS: usize = 3;

/// Square three-channel crop with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch<T> {
    pixels: FeatureMap<T>,
}

impl<T: Scalar> ImagePatch<T> {
    pub fn new(pixels: FeatureMap<T>) -> Result<Self> {
        if pixels.channels() != 3 {
            return Err(Error::shape("ImagePatch channels", 3, pixels.channels()));
        }
        if pixels.height() != pixels.width() {
            return Err(Error::shape(
                "ImagePatch extent",
                "square",
                format!("{}x{}", pixels.height(), pixels.width()),
            ));
        }
        Ok(Self { pixels })
    }

    pub fn size(&self) -> usize {
        self.pixels.width()
    }

    pub fn pixels(&self) -> &FeatureMap<T> {
        &self.pixels
    }
}

/// Replicates a single-channel thermal plane into three identical channels.
pub fn triplicate_tir<T: Scalar>(gray: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    if gray.channels() != 1 {
        return Err(Error::shape("triplicate_tir", 1, gray.channels()));
    }
    let plane = gray.channel(0).to_vec();
    FeatureMap::from_planes(&[plane.clone(), plane.clone(), plane], gray.height(), gray.width())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub seed: u64,
    /// Width of every stage.
    pub channels: usize,
    /// Output channels of each tap projection.
    pub neck_channels: usize,
    /// Side of the average-pooling stem window (and the feature stride).
    pub stride: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            channels: 32,
            neck_channels: 32,
            stride: 8,
        }
    }
}

/// Neck outputs of the three tapped stages, all at the same resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures<T>(pub [FeatureMap<T>; NUM_TAPS]);

impl<T: Scalar> LayerFeatures<T> {
    pub fn iter(&self) -> impl Iterator<Item = &FeatureMap<T>> {
        self.0.iter()
    }

    /// Same spatial window cut out of every layer.
    pub fn crop_center(&self, side: usize) -> Result<Self> {
        let crop = |m: &FeatureMap<T>| {
            if side > m.height() || side > m.width() {
                return Err(Error::shape("crop_center", format!("<= {}", m.height()), side));
            }
            m.crop((m.height() - side) / 2, (m.width() - side) / 2, side, side)
        };
        Ok(Self([crop(&self.0[0])?, crop(&self.0[1])?, crop(&self.0[2])?]))
    }
}

#[derive(Debug, Clone)]
struct Conv<T> {
    out: usize,
    inp: usize,
    k: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Conv<T> {
    fn random(seed: u64, tag: u64, out: usize, inp: usize, k: usize, gain: f64, bias_std: f64) -> Self {
        let mut rng = weight_rng(seed, tag);
        let std = gain / ((inp * k * k) as f64).sqrt();
        let w = Normal::new(0.0, std).expect("finite std");
        let b = Normal::new(0.0, bias_std).expect("finite std");
        let weights = (0..out * inp * k * k).map(|_| T::lit(w.sample(&mut rng))).collect();
        let bias = (0..out).map(|_| T::lit(b.sample(&mut rng))).collect();
        Self {
            out,
            inp,
            k,
            weights,
            bias,
        }
    }

    /// Same-size convolution with edge-replicated borders.
    fn forward(&self, x: &FeatureMap<T>) -> FeatureMap<T> {
        let (c, h, w) = x.shape();
        debug_assert_eq!(c, self.inp);
        let r = self.k / 2;
        let (ph, pw) = (h + 2 * r, w + 2 * r);
        let mut padded = vec![T::zero(); c * ph * pw];
        for ci in 0..c {
            for i in 0..ph {
                let si = i.saturating_sub(r).min(h - 1);
                for j in 0..pw {
                    let sj = j.saturating_sub(r).min(w - 1);
                    padded[(ci * ph + i) * pw + j] = x.get(ci, si, sj);
                }
            }
        }

        let mut out = FeatureMap::zeros(self.out, h, w);
        for co in 0..self.out {
            let plane = out.channel_mut(co);
            plane.fill(self.bias[co]);
            for ci in 0..c {
                for ky in 0..self.k {
                    for kx in 0..self.k {
                        let wv = self.weights[((co * c + ci) * self.k + ky) * self.k + kx];
                        for i in 0..h {
                            let src = &padded[(ci * ph + i + ky) * pw + kx..][..w];
                            let dst = &mut plane[i * w..(i + 1) * w];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Frozen random-weight feature extractor.
///
/// An average-pooling stem brings the patch to feature stride, a pointwise
/// layer lifts the three colour channels, and three 3x3 residual stages
/// follow; the output of stages 2, 3 and 4 is projected by a pointwise neck.
#[derive(Debug, Clone)]
pub struct Backbone<T> {
    config: BackboneConfig,
    stem: Conv<T>,
    stages: [Conv<T>; NUM_TAPS],
    necks: [Conv<T>; NUM_TAPS],
}

impl<T: Scalar> Backbone<T> {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        if config.channels == 0 || config.neck_channels == 0 || config.stride == 0 {
            return Err(Error::param("backbone", "channels and stride must be positive"));
        }
        let (s, c, n) = (config.seed, config.channels, config.neck_channels);
        let stem = Conv::random(s, 1, c, 3, 1, 2.0, 0.1);
        let stages = [
            Conv::random(s, 2, c, c, 3, 1.5, 0.05),
            Conv::random(s, 3, c, c, 3, 1.5, 0.05),
            Conv::random(s, 4, c, c, 3, 1.5, 0.05),
        ];
        let necks = [
            Conv::random(s, 12, n, c, 1, 1.0, 0.05),
            Conv::random(s, 13, n, c, 1, 1.0, 0.05),
            Conv::random(s, 14, n, c, 1, 1.0, 0.05),
        ];
        Ok(Self {
            config,
            stem,
            stages,
            necks,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn stride(&self) -> usize {
        self.config.stride
    }

    /// Feature side produced for a patch of `patch_size` pixels.
    pub fn feature_size(&self, patch_size: usize) -> usize {
        patch_size / self.config.stride
    }

    pub fn embed(&self, patch: &ImagePatch<T>) -> Result<LayerFeatures<T>> {
        let s = self.config.stride;
        let n = self.feature_size(patch.size());
        if n == 0 {
            return Err(Error::shape("embed", format!("patch >= {s}"), patch.size()));
        }
        let px = patch.pixels();
        let norm = T::one() / T::from_usize_lossy(s * s);
        let half = T::lit(0.5);
        let mut pooled = FeatureMap::zeros(3, n, n);
        for c in 0..3 {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = T::zero();
                    for u in 0..s {
                        for v in 0..s {
                            acc += px.get(c, i * s + u, j * s + v);
                        }
                    }
                    pooled.set(c, i, j, acc * norm - half);
                }
            }
        }

        let mut x = self.stem.forward(&pooled).map(|v| v.tanh());
        let mut taps = Vec::with_capacity(NUM_TAPS);
        for (stage, neck) in self.stages.iter().zip(&self.necks) {
            let y = stage.forward(&x);
            x = x.blend(T::one(), &y.map(|v| v.tanh()), T::one())?;
            taps.push(neck.forward(&x));
        }
        let [a, b, c]: [FeatureMap<T>; NUM_TAPS] = taps.try_into().expect("three taps");
        Ok(LayerFeatures([a, b, c]))
    }
}
