use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::backbone::NUM_TAPS;
use super::weight_rng;
use super::xcorr::dw_xcorr;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ClsMap, FeatureMap, RegMap};

/// Backbone layers that feed an RPN block.
pub const TAP_LAYERS: [usize; NUM_TAPS] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub seed: u64,
    pub num_anchors: usize,
    /// Scale from mean correlation to classification logits.
    pub cls_gain: f64,
    /// Scale of the random regression projection.
    pub reg_gain: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            num_anchors: 5,
            cls_gain: 16.0,
            reg_gain: 1e-4,
        }
    }
}

/// Classification and regression maps of one RPN block or of their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput<T> {
    pub cls: ClsMap<T>,
    pub reg: RegMap<T>,
}

/// Per-layer mixing weights for the classification (`alpha`) and regression
/// (`beta`) outputs. Both are normalized to sum to one on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadWeights<T> {
    pub alpha: [T; NUM_TAPS],
    pub beta: [T; NUM_TAPS],
}

impl<T: Scalar> HeadWeights<T> {
    pub fn new(alpha: [T; NUM_TAPS], beta: [T; NUM_TAPS]) -> Result<Self> {
        Ok(Self {
            alpha: normalize_simplex(alpha, "head.alpha")?,
            beta: normalize_simplex(beta, "head.beta")?,
        })
    }

    pub fn uniform() -> Self {
        let third = T::one() / T::lit(3.0);
        Self {
            alpha: [third; NUM_TAPS],
            beta: [third; NUM_TAPS],
        }
    }
}

fn normalize_simplex<T: Scalar>(v: [T; NUM_TAPS], name: &'static str) -> Result<[T; NUM_TAPS]> {
    if v.iter().any(|&x| !x.is_finite() || x < T::zero()) {
        return Err(Error::param(name, "weights must be finite and nonnegative"));
    }
    let sum = v[0] + v[1] + v[2];
    if sum <= T::zero() {
        return Err(Error::param(name, "weights must not all be zero"));
    }
    Ok(v.map(|x| x / sum))
}

/// One RPN block: per-channel centering of both inputs, depth-wise
/// correlation, then fixed pointwise projections to `2A` scores and `4A`
/// offsets.
#[derive(Debug, Clone)]
pub struct RpnHead<T> {
    layer: usize,
    channels: usize,
    num_anchors: usize,
    cls_w: Vec<T>,
    cls_b: Vec<T>,
    reg_w: Vec<T>,
    reg_b: Vec<T>,
}

impl<T: Scalar> RpnHead<T> {
    pub fn new(config: &HeadConfig, layer: usize, channels: usize) -> Result<Self> {
        if !TAP_LAYERS.contains(&layer) {
            return Err(Error::param("layer", format!("expected one of {TAP_LAYERS:?}, got {layer}")));
        }
        if config.num_anchors == 0 || channels == 0 {
            return Err(Error::param("head", "anchor and channel counts must be positive"));
        }
        let a = config.num_anchors;
        let mut rng = weight_rng(config.seed, 100 + layer as u64);
        let inv_c = 1.0 / channels as f64;

        // Foreground rows are a jittered channel average, background rows its
        // negation, so the fg-bg contrast follows template similarity.
        let mut cls_w = Vec::with_capacity(2 * a * channels);
        for sign in [-1.0, 1.0] {
            for _ in 0..a * channels {
                let jitter: f64 = rng.random_range(-0.1..0.1);
                cls_w.push(T::lit(sign * config.cls_gain * (1.0 + jitter) * inv_c));
            }
        }
        let cls_b = (0..2 * a).map(|_| T::lit(rng.random_range(-0.05..0.05))).collect();

        let normal = Normal::new(0.0, config.reg_gain * inv_c.sqrt()).expect("finite std");
        let reg_w = (0..4 * a * channels).map(|_| T::lit(normal.sample(&mut rng))).collect();
        let reg_b = (0..4 * a).map(|_| T::lit(rng.random_range(-0.1..0.1) * config.reg_gain)).collect();

        Ok(Self {
            layer,
            channels,
            num_anchors: a,
            cls_w,
            cls_b,
            reg_w,
            reg_b,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn forward(&self, z: &FeatureMap<T>, x: &FeatureMap<T>) -> Result<HeadOutput<T>> {
        if z.channels() != self.channels || x.channels() != self.channels {
            return Err(Error::shape("rpn_head channels", self.channels, z.channels().max(x.channels())));
        }
        let zc = center_channels(z);
        let xc = center_channels(x);
        let corr = dw_xcorr(&zc, &xc)?;
        let corr = corr.scale(T::one() / T::from_usize_lossy(z.plane_len()));
        let (h, w) = (corr.height(), corr.width());
        let cls = project(&corr, &self.cls_w, &self.cls_b, 2 * self.num_anchors)?;
        let reg = project(&corr, &self.reg_w, &self.reg_b, 4 * self.num_anchors)?;
        debug_assert_eq!(cls.shape(), (2 * self.num_anchors, h, w));
        Ok(HeadOutput {
            cls: ClsMap::new(cls)?,
            reg: RegMap::new(reg)?,
        })
    }
}

fn center_channels<T: Scalar>(m: &FeatureMap<T>) -> FeatureMap<T> {
    let mut out = m.clone();
    let n = T::from_usize_lossy(m.plane_len());
    for c in 0..m.channels() {
        let plane = out.channel_mut(c);
        let mean = plane.iter().fold(T::zero(), |a, &b| a + b) / n;
        plane.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

fn project<T: Scalar>(x: &FeatureMap<T>, w: &[T], b: &[T], out_channels: usize) -> Result<FeatureMap<T>> {
    let (c, h, wd) = x.shape();
    let mut out = FeatureMap::zeros(out_channels, h, wd);
    for o in 0..out_channels {
        let plane = out.channel_mut(o);
        plane.fill(b[o]);
        for ci in 0..c {
            let wv = w[o * c + ci];
            for (d, &s) in plane.iter_mut().zip(x.channel(ci)) {
                *d += wv * s;
            }
        }
    }
    Ok(out)
}

/// The three RPN blocks attached to layers 2, 3 and 4.
#[derive(Debug, Clone)]
pub struct RpnHeads<T> {
    heads: [RpnHead<T>; NUM_TAPS],
}

impl<T: Scalar> RpnHeads<T> {
    pub fn new(config: &HeadConfig, channels: usize) -> Result<Self> {
        Ok(Self {
            heads: [
                RpnHead::new(config, 2, channels)?,
                RpnHead::new(config, 3, channels)?,
                RpnHead::new(config, 4, channels)?,
            ],
        })
    }

    /// Runs the block of backbone layer `layer` (2, 3 or 4).
    pub fn rpn_head(&self, z: &FeatureMap<T>, x: &FeatureMap<T>, layer: usize) -> Result<HeadOutput<T>> {
        let idx = TAP_LAYERS
            .iter()
            .position(|&l| l == layer)
            .ok_or_else(|| Error::param("layer", format!("expected one of {TAP_LAYERS:?}, got {layer}")))?;
        self.heads[idx].forward(z, x)
    }

    /// Runs every block on matching layers of template and search features.
    pub fn forward_all(
        &self,
        z: &super::LayerFeatures<T>,
        x: &super::LayerFeatures<T>,
    ) -> Result<[HeadOutput<T>; NUM_TAPS]> {
        Ok([
            self.heads[0].forward(&z.0[0], &x.0[0])?,
            self.heads[1].forward(&z.0[1], &x.0[1])?,
            self.heads[2].forward(&z.0[2], &x.0[2])?,
        ])
    }
}

/// Weighted sum of the per-layer outputs: `C = sum alpha_i cls_i`,
/// `B = sum beta_i reg_i`.
pub fn aggregate<T: Scalar>(outputs: &[HeadOutput<T>; NUM_TAPS], weights: &HeadWeights<T>) -> Result<HeadOutput<T>> {
    let first = &outputs[0];
    for o in &outputs[1..] {
        first.cls.as_map().ensure_same_shape(o.cls.as_map(), "aggregate cls")?;
        first.reg.as_map().ensure_same_shape(o.reg.as_map(), "aggregate reg")?;
    }
    let mix = |maps: [&FeatureMap<T>; NUM_TAPS], w: &[T; NUM_TAPS]| {
        let mut acc = maps[0].scale(w[0]);
        for (m, &k) in maps[1..].iter().zip(&w[1..]) {
            for (a, &v) in acc.data_mut().iter_mut().zip(m.data()) {
                *a += k * v;
            }
        }
        acc
    };
    let cls = mix(
        [outputs[0].cls.as_map(), outputs[1].cls.as_map(), outputs[2].cls.as_map()],
        &weights.alpha,
    );
    let reg = mix(
        [outputs[0].reg.as_map(), outputs[1].reg.as_map(), outputs[2].reg.as_map()],
        &weights.beta,
    );
    Ok(HeadOutput {
        cls: ClsMap::new(cls)?,
        reg: RegMap::new(reg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_output(v: f64) -> HeadOutput<f64> {
        HeadOutput {
            cls: ClsMap::new(FeatureMap::filled(2, 3, 3, v)).unwrap(),
            reg: RegMap::new(FeatureMap::filled(4, 3, 3, 10.0 * v)).unwrap(),
        }
    }

    #[test]
    fn head_weights_are_normalized() {
        let w = HeadWeights::new([2.0, 1.0, 1.0], [0.0, 0.0, 3.0]).unwrap();
        assert_eq!(w.alpha, [0.5, 0.25, 0.25]);
        assert_eq!(w.beta, [0.0, 0.0, 1.0]);
        assert!(HeadWeights::new([0.0; 3], [1.0; 3]).is_err());
        assert!(HeadWeights::new([-1.0, 1.0, 1.0], [1.0; 3]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let outs = [constant_output(1.0), constant_output(2.0), constant_output(3.0)];
        let one_hot = HeadWeights::new([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        let agg = aggregate(&outs, &one_hot).unwrap();
        assert_eq!(agg.cls, outs[0].cls);
        assert_eq!(agg.reg, outs[2].reg);

        let mean = aggregate(&outs, &HeadWeights::new([1.0; 3], [1.0; 3]).unwrap()).unwrap();
        assert!(mean.cls.as_map().data().iter().all(|&v| (v - 2.0).abs() < 1e-12));

        let mut bad = outs.clone();
        bad[1].cls = ClsMap::new(FeatureMap::zeros(2, 2, 3)).unwrap();
        assert!(aggregate(&bad, &one_hot).is_err());
    }

    #[test]
    fn aggregate_is_linear() {
        let outs = [constant_output(1.0), constant_output(-2.0), constant_output(0.5)];
        let scaled = outs.clone().map(|o| HeadOutput {
            cls: ClsMap::new(o.cls.as_map().scale(3.0)).unwrap(),
            reg: o.reg,
        });
        let w = HeadWeights::new([0.2, 0.3, 0.5], [1.0; 3]).unwrap();
        let a = aggregate(&outs, &w).unwrap();
        let b = aggregate(&scaled, &w).unwrap();
        for (x, y) in a.cls.as_map().data().iter().zip(b.cls.as_map().data()) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unknown_layer() {
        let cfg = HeadConfig::default();
        assert!(RpnHead::<f64>::new(&cfg, 1, 8).is_err());
        let heads = RpnHeads::<f64>::new(&cfg, 8).unwrap();
        let z = FeatureMap::zeros(8, 3, 3);
        let x = FeatureMap::zeros(8, 9, 9);
        assert!(heads.rpn_head(&z, &x, 5).is_err());
        let out = heads.rpn_head(&z, &x, 3).unwrap();
        assert_eq!(out.cls.as_map().shape(), (10, 7, 7));
        assert_eq!(out.reg.as_map().shape(), (20, 7, 7));
        assert_eq!(out, heads.rpn_head(&z, &x, 3).unwrap());
    }
}
