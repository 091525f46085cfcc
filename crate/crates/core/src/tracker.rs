//! Per-frame tracking loop: crops around the previous box, runs the Siamese
//! core on each stream, applies the configured fusion mode and postprocesses
//! the fused maps into the next box.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::decision::{
    average_decision, bias_gap, debias_weights, fuse_after_norm, fuse_decision, modulated_gap, normalize, postprocess,
    FusionWeights, PostprocessConfig,
};
use crate::error::{Error, Result};
use crate::feature_fusion::{fuse_features, AttentionConfig, SelectionConfig};
use crate::geometry::{make_anchors, AnchorConfig, AnchorGrid, BBox};
use crate::pixel::{fuse_images, LevelSelector, Pairing, ProjectionMatrix};
use crate::scalar::Scalar;
use crate::siamese::{
    aggregate, triplicate_tir, Backbone, BackboneConfig, HeadConfig, HeadOutput, HeadWeights, ImagePatch,
    LayerFeatures, RpnHeads, TemplateState,
};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// De-biased decision fusion.
    DecisionDfat,
    /// Plain averaging of the two decisions.
    DecisionAvg,
    /// Averaging of the normalized foreground probabilities.
    AfterNorm,
    /// Feature-level fusion feeding a single head.
    Feature,
    /// Pixel-level fusion of the input frames.
    Pixel,
    RgbOnly,
    TirOnly,
}

impl FusionMode {
    pub const ALL: [FusionMode; 7] = [
        FusionMode::DecisionDfat,
        FusionMode::DecisionAvg,
        FusionMode::AfterNorm,
        FusionMode::Feature,
        FusionMode::Pixel,
        FusionMode::RgbOnly,
        FusionMode::TirOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::DecisionDfat => "decision_dfat",
            FusionMode::DecisionAvg => "decision_avg",
            FusionMode::AfterNorm => "after_norm",
            FusionMode::Feature => "feature",
            FusionMode::Pixel => "pixel",
            FusionMode::RgbOnly => "rgb_only",
            FusionMode::TirOnly => "tir_only",
        }
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion mode `{s}`")))
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig<T: Scalar> {
    pub mode: FusionMode,
    pub weights: FusionWeights<T>,
    pub post: PostprocessConfig<T>,
    pub selection: SelectionConfig,
    pub attention: AttentionConfig,
    pub level: LevelSelector,
    pub pairing: Pairing,
    /// Patch stride of the pixel decomposition; the patch side when `None`.
    pub pixel_stride: Option<usize>,
    pub exemplar_size: usize,
    pub instance_size: usize,
    pub context_amount: T,
    pub template_update: bool,
    pub template_lr: T,
    pub template_cadence: usize,
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub head_weights: HeadWeights<T>,
    /// Base anchor side in crop pixels; half the exemplar side matches a
    /// square target under the context rule.
    pub anchor_scale: T,
    pub anchor_ratios: Vec<T>,
    /// Smallest box side the tracker will report.
    pub min_size: T,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            mode: FusionMode::DecisionDfat,
            weights: FusionWeights::default(),
            post: PostprocessConfig::default(),
            selection: SelectionConfig::default(),
            attention: AttentionConfig::default(),
            level: LevelSelector::default(),
            pairing: Pairing::FusedTir,
            pixel_stride: None,
            exemplar_size: 127,
            instance_size: 255,
            context_amount: T::lit(0.5),
            template_update: true,
            template_lr: T::lit(0.1),
            template_cadence: 10,
            backbone: BackboneConfig::default(),
            head: HeadConfig::default(),
            head_weights: HeadWeights::uniform(),
            anchor_scale: T::lit(63.5),
            anchor_ratios: [0.33, 0.5, 1.0, 2.0, 3.0].map(T::lit).to_vec(),
            min_size: T::lit(10.0),
        }
    }
}

impl<T: Scalar> TrackerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.instance_size <= self.exemplar_size {
            return Err(Error::param("instance_size", "must exceed exemplar_size"));
        }
        if !(self.context_amount >= T::zero() && self.context_amount.is_finite()) {
            return Err(Error::param("context_amount", "must be finite and nonnegative"));
        }
        if self.anchor_ratios.len() != self.head.num_anchors {
            return Err(Error::param("anchor.ratios", "count must equal head.num_anchors"));
        }
        if !(self.anchor_scale > T::zero() && self.min_size > T::zero()) {
            return Err(Error::param("anchor.scale", "anchor scale and min size must be positive"));
        }
        if self.template_cadence == 0 {
            return Err(Error::param("template.cadence", "must be at least 1"));
        }
        if !(self.template_lr >= T::zero() && self.template_lr <= T::one()) {
            return Err(Error::param("template.lr", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Side of the context-padded square around a `w x h` box.
    pub fn context_side(&self, w: T, h: T) -> T {
        let p = self.context_amount * (w + h);
        ((w + p) * (h + p)).sqrt()
    }
}

/// Per-channel means of a frame, used to pad out-of-frame crop regions.
fn channel_means<T: Scalar>(frame: &FeatureMap<T>) -> Vec<T> {
    let n = T::from_usize_lossy(frame.plane_len());
    (0..frame.channels())
        .map(|c| frame.channel(c).iter().fold(T::zero(), |a, &b| a + b) / n)
        .collect()
}

/// Square crop of `side` frame pixels centered at `(cx, cy)`, resampled
/// bilinearly to `out x out`. Pixel `j` of the frame covers `[j, j + 1)`;
/// samples falling outside the frame take the channel mean.
pub fn crop_patch<T: Scalar>(frame: &FeatureMap<T>, cx: T, cy: T, side: T, out: usize) -> Result<ImagePatch<T>> {
    if !(side > T::zero() && side.is_finite()) || out == 0 {
        return Err(Error::param("crop", "side and output size must be positive"));
    }
    let (c, h, w) = frame.shape();
    let means = channel_means(frame);
    let step = side / T::from_usize_lossy(out);
    let half = T::lit(0.5);
    let origin = T::from_usize_lossy(out) * half;
    let coords = |center: T| -> Vec<T> {
        (0..out)
            .map(|k| center + (T::from_usize_lossy(k) + half - origin) * step)
            .collect()
    };
    let xs = coords(cx);
    let ys = coords(cy);
    let (wf, hf) = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    let mut data = FeatureMap::zeros(c, out, out);
    for (i, &y) in ys.iter().enumerate() {
        for (j, &x) in xs.iter().enumerate() {
            if x < T::zero() || y < T::zero() || x >= wf || y >= hf {
                for (ch, &m) in means.iter().enumerate() {
                    data.set(ch, i, j, m);
                }
                continue;
            }
            let fx = (x - half).max(T::zero()).min(wf - T::one());
            let fy = (y - half).max(T::zero()).min(hf - T::one());
            let x0 = fx.floor().as_f64() as usize;
            let y0 = fy.floor().as_f64() as usize;
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (ax, ay) = (fx - T::from_usize_lossy(x0), fy - T::from_usize_lossy(y0));
            for ch in 0..c {
                let top = frame.get(ch, y0, x0) * (T::one() - ax) + frame.get(ch, y0, x1) * ax;
                let bottom = frame.get(ch, y1, x0) * (T::one() - ax) + frame.get(ch, y1, x1) * ax;
                data.set(ch, i, j, top * (T::one() - ay) + bottom * ay);
            }
        }
    }
    ImagePatch::new(data)
}

/// Per-frame diagnostics reported next to the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutput<T> {
    pub bbox: BBox<T>,
    /// Penalized score of the selected anchor.
    pub score: T,
    pub index: usize,
    /// Debias weights of the aggregated maps; absent for single-stream modes.
    pub lambda12: Option<T>,
    pub lambda22: Option<T>,
    /// Foreground positive-mean gap before modulation.
    pub bias_gap: Option<T>,
    /// Same gap between the debias-weighted terms.
    pub modulated_gap: Option<T>,
    pub template_updated: bool,
}

/// Per-frame boxes with the diagnostics of every tracked frame.
pub type Trajectory<T> = Vec<(BBox<T>, Option<FrameOutput<T>>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState<T> {
    pub prev: BBox<T>,
    /// One template per network stream.
    pub templates: Vec<TemplateState<T>>,
    pub frame_index: usize,
    frame_shape: (usize, usize),
}

/// Frozen model plus configuration; shared read-only across sequences.
#[derive(Debug, Clone)]
pub struct Tracker<T: Scalar> {
    cfg: TrackerConfig<T>,
    backbone: Backbone<T>,
    heads: RpnHeads<T>,
    anchors: AnchorGrid<T>,
    template_side: usize,
    projection: Option<ProjectionMatrix<T>>,
}

impl<T: Scalar> Tracker<T> {
    /// `projection` is required in pixel mode and ignored otherwise.
    pub fn new(cfg: TrackerConfig<T>, projection: Option<ProjectionMatrix<T>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode == FusionMode::Pixel && projection.is_none() {
            return Err(Error::Config("pixel mode needs a trained projection".into()));
        }
        let backbone = Backbone::new(cfg.backbone.clone())?;
        let heads = RpnHeads::new(&cfg.head, cfg.backbone.neck_channels)?;
        let stride = backbone.stride();
        let exemplar_feat = backbone.feature_size(cfg.exemplar_size);
        let template_side = (exemplar_feat / 2).max(1) | 1;
        let instance_feat = backbone.feature_size(cfg.instance_size);
        if instance_feat < template_side {
            return Err(Error::param("instance_size", "search features smaller than template"));
        }
        let spatial = instance_feat - template_side + 1;
        let anchors = make_anchors(&AnchorConfig {
            stride,
            scales: vec![cfg.anchor_scale],
            ratios: cfg.anchor_ratios.clone(),
            spatial: (spatial, spatial),
            window: T::from_usize_lossy(cfg.instance_size),
        })?;
        Ok(Self {
            cfg,
            backbone,
            heads,
            anchors,
            template_side,
            projection,
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.cfg
    }

    pub fn anchors(&self) -> &AnchorGrid<T> {
        &self.anchors
    }

    /// Inputs of each network stream for one frame pair.
    fn streams(&self, rgb: &FeatureMap<T>, tir: &FeatureMap<T>) -> Result<Vec<FeatureMap<T>>> {
        if (rgb.height(), rgb.width()) != (tir.height(), tir.width()) {
            return Err(Error::shape(
                "frame pair",
                format!("{}x{}", rgb.height(), rgb.width()),
                format!("{}x{}", tir.height(), tir.width()),
            ));
        }
        if rgb.channels() != 3 {
            return Err(Error::shape("rgb channels", 3, rgb.channels()));
        }
        let tir3 = || match tir.channels() {
            1 => triplicate_tir(tir),
            3 => Ok(tir.clone()),
            c => Err(Error::shape("tir channels", "1 or 3", c)),
        };
        Ok(match self.cfg.mode {
            FusionMode::RgbOnly => vec![rgb.clone()],
            FusionMode::TirOnly => vec![tir3()?],
            FusionMode::Pixel => {
                let proj = self.projection.as_ref().expect("checked in new");
                let stride = self.cfg.pixel_stride.unwrap_or(proj.patch_side());
                let (a, b) = fuse_images(rgb, tir, proj, self.cfg.level, self.cfg.pairing, stride)?;
                match self.cfg.pairing {
                    Pairing::FusedFused => vec![a],
                    Pairing::FusedTir => vec![a, b],
                }
            }
            _ => vec![rgb.clone(), tir3()?],
        })
    }

    fn exemplar(&self, image: &FeatureMap<T>, bbox: &BBox<T>) -> Result<LayerFeatures<T>> {
        let side = self.cfg.context_side(bbox.w, bbox.h);
        let patch = crop_patch(image, bbox.cx, bbox.cy, side, self.cfg.exemplar_size)?;
        self.backbone.embed(&patch)?.crop_center(self.template_side)
    }

    pub fn init(&self, rgb: &FeatureMap<T>, tir: &FeatureMap<T>, gt: &BBox<T>) -> Result<TrackerState<T>> {
        let templates = self
            .streams(rgb, tir)?
            .iter()
            .map(|img| TemplateState::new(self.exemplar(img, gt)?, self.cfg.template_lr, self.cfg.template_cadence))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrackerState {
            prev: *gt,
            templates,
            frame_index: 0,
            frame_shape: (rgb.height(), rgb.width()),
        })
    }

    pub fn track_frame(
        &self,
        state: &mut TrackerState<T>,
        rgb: &FeatureMap<T>,
        tir: &FeatureMap<T>,
    ) -> Result<FrameOutput<T>> {
        let shape = (rgb.height(), rgb.width());
        if shape != state.frame_shape {
            return Err(Error::shape(
                "track_frame",
                format!("{:?}", state.frame_shape),
                format!("{shape:?}"),
            ));
        }
        let images = self.streams(rgb, tir)?;
        if images.len() != state.templates.len() {
            return Err(Error::shape("track_frame streams", state.templates.len(), images.len()));
        }
        let prev = state.prev;
        let s_z = self.cfg.context_side(prev.w, prev.h);
        let instance = T::from_usize_lossy(self.cfg.instance_size);
        let s_x = s_z * instance / T::from_usize_lossy(self.cfg.exemplar_size);
        let scale = instance / s_x;

        let search = images
            .iter()
            .map(|img| self.backbone.embed(&crop_patch(img, prev.cx, prev.cy, s_x, self.cfg.instance_size)?))
            .collect::<Result<Vec<_>>>()?;

        let mut out = FrameOutput {
            bbox: prev,
            score: T::zero(),
            index: 0,
            lambda12: None,
            lambda22: None,
            bias_gap: None,
            modulated_gap: None,
            template_updated: false,
        };

        let (prob, reg) = if self.cfg.mode == FusionMode::Feature {
            let z = self.fuse_layers(state.templates[0].embeddings(), state.templates[1].embeddings())?;
            let x = self.fuse_layers(&search[0], &search[1])?;
            let fused = self.head_output(&z, &x)?;
            (normalize(&fused.cls), fused.reg)
        } else {
            let outputs = state
                .templates
                .iter()
                .zip(&search)
                .map(|(t, x)| self.head_output(t.embeddings(), x))
                .collect::<Result<Vec<_>>>()?;
            if let [rgb_out, tir_out] = outputs.as_slice() {
                let (l12, l22) = debias_weights(&rgb_out.cls, &tir_out.cls)?;
                out.lambda12 = Some(l12);
                out.lambda22 = Some(l22);
                out.bias_gap = Some(bias_gap(&rgb_out.cls, &tir_out.cls)?);
                out.modulated_gap = Some(modulated_gap(&rgb_out.cls, &tir_out.cls)?);
                match self.cfg.mode {
                    FusionMode::DecisionDfat => {
                        let fused = fuse_decision(rgb_out, tir_out, &self.cfg.weights)?;
                        (normalize(&fused.cls), fused.reg)
                    }
                    FusionMode::AfterNorm => {
                        let avg = average_decision(rgb_out, tir_out)?;
                        (fuse_after_norm(&rgb_out.cls, &tir_out.cls)?, avg.reg)
                    }
                    _ => {
                        let avg = average_decision(rgb_out, tir_out)?;
                        (normalize(&avg.cls), avg.reg)
                    }
                }
            } else {
                let single = &outputs[0];
                (normalize(&single.cls), single.reg.clone())
            }
        };

        let window_center = instance * T::lit(0.5);
        let prev_crop = BBox::new(window_center, window_center, prev.w * scale, prev.h * scale)?;
        let sel = postprocess(&prob, &reg, &self.anchors, &prev_crop, &self.cfg.post)?;
        let (fw, fh) = (T::from_usize_lossy(shape.1), T::from_usize_lossy(shape.0));
        let cx = (prev.cx + (sel.bbox.cx - window_center) / scale).max(T::zero()).min(fw);
        let cy = (prev.cy + (sel.bbox.cy - window_center) / scale).max(T::zero()).min(fh);
        let w = (sel.bbox.w / scale).max(self.cfg.min_size).min(fw.max(self.cfg.min_size));
        let h = (sel.bbox.h / scale).max(self.cfg.min_size).min(fh.max(self.cfg.min_size));
        let bbox = BBox::new(cx, cy, w, h)?;

        state.prev = bbox;
        state.frame_index += 1;
        out.bbox = bbox;
        out.score = sel.score;
        out.index = sel.index;

        if self.cfg.template_update {
            let mut due = false;
            for t in state.templates.iter_mut() {
                due |= t.tick();
            }
            if due {
                for (t, img) in state.templates.iter_mut().zip(&images) {
                    t.update(&self.exemplar(img, &bbox)?)?;
                }
                out.template_updated = true;
            }
        }
        Ok(out)
    }

    fn head_output(&self, z: &LayerFeatures<T>, x: &LayerFeatures<T>) -> Result<HeadOutput<T>> {
        aggregate(&self.heads.forward_all(z, x)?, &self.cfg.head_weights)
    }

    fn fuse_layers(&self, a: &LayerFeatures<T>, b: &LayerFeatures<T>) -> Result<LayerFeatures<T>> {
        let fuse = |i: usize| -> Result<FeatureMap<T>> {
            Ok(fuse_features(&a.0[i], &b.0[i], &self.cfg.selection, &self.cfg.attention)?.map)
        };
        Ok(LayerFeatures([fuse(0)?, fuse(1)?, fuse(2)?]))
    }

    /// Tracks a whole sequence from its first-frame box. Frame 0 of the
    /// trajectory echoes `gt0`; its diagnostics are `None`.
    pub fn run_sequence<F>(&self, len: usize, mut frame: F, gt0: &BBox<T>) -> Result<Trajectory<T>>
    where
        F: FnMut(usize) -> Result<(FeatureMap<T>, FeatureMap<T>)>,
    {
        if len == 0 {
            return Err(Error::Data("empty sequence".into()));
        }
        let (rgb0, tir0) = frame(0)?;
        let mut state = self.init(&rgb0, &tir0, gt0)?;
        let mut out = Vec::with_capacity(len);
        out.push((*gt0, None));
        for k in 1..len {
            let (rgb, tir) = frame(k)?;
            let r = self.track_frame(&mut state, &rgb, &tir)?;
            out.push((r.bbox, Some(r)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gradient_frame(h: usize, w: usize) -> FeatureMap<f64> {
        let plane: Vec<f64> = (0..h * w).map(|k| ((k / w) as f64 / h as f64 + (k % w) as f64 / w as f64) / 2.0).collect();
        FeatureMap::from_planes(&[plane.clone(), plane.clone(), plane], h, w).unwrap()
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in FusionMode::ALL {
            assert_eq!(m.as_str().parse::<FusionMode>().unwrap(), m);
        }
        assert!("late".parse::<FusionMode>().is_err());
    }

    #[test]
    fn context_side_example() {
        let cfg = TrackerConfig::<f64>::default();
        assert_relative_eq!(cfg.context_side(64.0, 64.0), 128.0, epsilon = 1e-12);
    }

    #[test]
    fn crop_identity_and_padding() {
        let f = gradient_frame(20, 30);
        // a crop covering exactly the frame at unit scale reproduces it
        let square = gradient_frame(20, 20);
        let p = crop_patch(&square, 10.0, 10.0, 20.0, 20).unwrap();
        assert_eq!(p.pixels(), &square);

        let out = crop_patch(&f, -100.0, -100.0, 10.0, 4).unwrap();
        let mean = f.channel(0).iter().sum::<f64>() / 600.0;
        assert!(out.pixels().data().iter().all(|&v| (v - mean).abs() < 1e-12));
        assert!(crop_patch(&f, 0.0, 0.0, 0.0, 4).is_err());
    }

    #[test]
    fn config_rejects_inverted_sizes() {
        let cfg = TrackerConfig::<f64> {
            instance_size: 100,
            ..TrackerConfig::default()
        };
        assert!(cfg.validate().is_err());
        let pixel = TrackerConfig::<f64> {
            mode: FusionMode::Pixel,
            ..TrackerConfig::default()
        };
        assert!(Tracker::new(pixel, None).is_err());
    }

    #[test]
    fn score_map_geometry() {
        let t = Tracker::<f64>::new(TrackerConfig::default(), None).unwrap();
        assert_eq!(t.template_side, 7);
        assert_eq!(t.anchors().spatial, (25, 25));
        assert_eq!(t.anchors().num_anchors, 5);
    }

    #[test]
    fn init_sets_frame_zero_and_rejects_resized_frames() {
        let t = Tracker::<f64>::new(TrackerConfig::default(), None).unwrap();
        let rgb = gradient_frame(64, 80);
        let tir = FeatureMap::filled(1, 64, 80, 0.3);
        let gt = BBox::new(40.0, 32.0, 16.0, 12.0).unwrap();
        let s = t.init(&rgb, &tir, &gt).unwrap();
        assert_eq!(s.frame_index, 0);
        assert_eq!(s.prev, gt);
        assert_eq!(s.templates.len(), 2);
        assert_eq!(s, t.init(&rgb, &tir, &gt).unwrap());
        let mut s2 = s.clone();
        assert!(t.track_frame(&mut s2, &gradient_frame(60, 80), &FeatureMap::filled(1, 60, 80, 0.3)).is_err());
    }
}
