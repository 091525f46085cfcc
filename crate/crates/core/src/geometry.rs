//! Bounding-box algebra, anchor lattices and the center-offset / log-size
//! box parameterization used by the regression heads.
//!
//! Coordinates are real-valued pixels with the origin at the image top-left,
//! x growing rightward and y downward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::RegMap;

/// Axis-aligned box in center form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !(cx.is_finite() && cy.is_finite() && ok(w) && ok(h)) {
            return Err(Error::InvalidBox {
                w: w.as_f64(),
                h: h.as_f64(),
            });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Box from its top-left corner and size (the VOT `x,y,w,h` form).
    pub fn from_xywh(x: T, y: T, w: T, h: T) -> Result<Self> {
        let half = T::lit(0.5);
        Self::new(x + w * half, y + h * half, w, h)
    }

    pub fn from_corners(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        Self::from_xywh(x0, y0, x1 - x0, y1 - y0)
    }

    /// `[x0, y0, x1, y1]`.
    pub fn corners(&self) -> [T; 4] {
        let half = T::lit(0.5);
        let (hw, hh) = (self.w * half, self.h * half);
        [self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh]
    }

    /// `[x, y, w, h]` with `(x, y)` the top-left corner.
    pub fn xywh(&self) -> [T; 4] {
        let [x0, y0, ..] = self.corners();
        [x0, y0, self.w, self.h]
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    pub fn center_distance(&self, other: &Self) -> T {
        let dx = self.cx - other.cx;
        let dy = self.cy - other.cy;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    if a == b {
        return T::one();
    }
    let [ax0, ay0, ax1, ay1] = a.corners();
    let [bx0, by0, bx1, by1] = b.corners();
    let iw = ax1.min(bx1) - ax0.max(bx0);
    let ih = ay1.min(by1) - ay0.max(by0);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

/// Ground-truth annotation as stored in VOT `groundtruth.txt` lines.
#[derive(Debug, Clone, PartialEq)]
pub enum Region<T> {
    /// Top-left x, y, width, height.
    Rect4([T; 4]),
    /// Four corner points `x1,y1,...,x4,y4`.
    Poly8([T; 8]),
}

impl<T: Scalar> Region<T> {
    pub fn from_values(values: &[T]) -> Result<Self> {
        match values.len() {
            4 => Ok(Region::Rect4([values[0], values[1], values[2], values[3]])),
            8 => {
                let mut v = [T::zero(); 8];
                v.copy_from_slice(values);
                Ok(Region::Poly8(v))
            }
            n => Err(Error::MalformedRegion(n)),
        }
    }

    pub fn values(&self) -> &[T] {
        match self {
            Region::Rect4(v) => v,
            Region::Poly8(v) => v,
        }
    }
}

/// Converts a region to a center-form box. Polygons map to their
/// axis-aligned min/max envelope.
pub fn region_to_bbox<T: Scalar>(region: &Region<T>) -> Result<BBox<T>> {
    match region {
        Region::Rect4([x, y, w, h]) => BBox::from_xywh(*x, *y, *w, *h),
        Region::Poly8(p) => {
            let xs = [p[0], p[2], p[4], p[6]];
            let ys = [p[1], p[3], p[5], p[7]];
            let min = |v: [T; 4]| v.into_iter().fold(v[0], |a, b| a.min(b));
            let max = |v: [T; 4]| v.into_iter().fold(v[0], |a, b| a.max(b));
            BBox::from_corners(min(xs), min(ys), max(xs), max(ys))
        }
    }
}

/// Anchor lattice parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig<T> {
    pub stride: usize,
    /// Base side lengths in pixels.
    pub scales: Vec<T>,
    /// Width over height.
    pub ratios: Vec<T>,
    /// Grid rows and columns.
    pub spatial: (usize, usize),
    /// Side of the search window the grid is centered in.
    pub window: T,
}

impl<T: Scalar> AnchorConfig<T> {
    pub fn num_anchors(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }
}

/// `A x H x W` anchor boxes, anchor-major then row-major.
///
/// Anchor index `a = ratio_index * |scales| + scale_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid<T> {
    pub stride: usize,
    pub num_anchors: usize,
    pub spatial: (usize, usize),
    pub boxes: Vec<BBox<T>>,
}

impl<T: Scalar> AnchorGrid<T> {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Splits a flat index into `(anchor, row, col)`.
    pub fn unravel(&self, index: usize) -> (usize, usize, usize) {
        let (h, w) = self.spatial;
        (index / (h * w), (index / w) % h, index % w)
    }
}

pub fn make_anchors<T: Scalar>(cfg: &AnchorConfig<T>) -> Result<AnchorGrid<T>> {
    if cfg.scales.is_empty() {
        return Err(Error::param("anchor.scales", "must not be empty"));
    }
    if cfg.ratios.is_empty() {
        return Err(Error::param("anchor.ratios", "must not be empty"));
    }
    if cfg.stride == 0 {
        return Err(Error::param("anchor.stride", "must be positive"));
    }
    let (rows, cols) = cfg.spatial;
    if rows == 0 || cols == 0 {
        return Err(Error::param("anchor.spatial", "grid must be at least 1x1"));
    }

    let stride = T::from_usize_lossy(cfg.stride);
    let half = T::lit(0.5);
    let center = cfg.window * half;
    // Offset so the lattice center coincides with the window center.
    let ox = center - T::from_usize_lossy(cols) * stride * half;
    let oy = center - T::from_usize_lossy(rows) * stride * half;

    let mut boxes = Vec::with_capacity(cfg.num_anchors() * rows * cols);
    for &ratio in &cfg.ratios {
        for &scale in &cfg.scales {
            let root = ratio.sqrt();
            let (w, h) = (scale * root, scale / root);
            for i in 0..rows {
                for j in 0..cols {
                    let cx = ox + (T::from_usize_lossy(j) + half) * stride;
                    let cy = oy + (T::from_usize_lossy(i) + half) * stride;
                    boxes.push(BBox::new(cx, cy, w, h)?);
                }
            }
        }
    }
    Ok(AnchorGrid {
        stride: cfg.stride,
        num_anchors: cfg.num_anchors(),
        spatial: cfg.spatial,
        boxes,
    })
}

/// Offsets `(dx, dy, dw, dh)` of `gt` relative to `anchor`.
pub fn encode<T: Scalar>(gt: &BBox<T>, anchor: &BBox<T>) -> [T; 4] {
    [
        (gt.cx - anchor.cx) / anchor.w,
        (gt.cy - anchor.cy) / anchor.h,
        (gt.w / anchor.w).ln(),
        (gt.h / anchor.h).ln(),
    ]
}

pub fn decode_one<T: Scalar>(offsets: [T; 4], anchor: &BBox<T>) -> Result<BBox<T>> {
    let [dx, dy, dw, dh] = offsets;
    BBox::new(
        anchor.cx + dx * anchor.w,
        anchor.cy + dy * anchor.h,
        anchor.w * dw.exp(),
        anchor.h * dh.exp(),
    )
}

/// Applies a regression field to every anchor of the grid.
pub fn decode<T: Scalar>(reg: &RegMap<T>, anchors: &AnchorGrid<T>) -> Result<Vec<BBox<T>>> {
    if reg.num_anchors() != anchors.num_anchors || reg.spatial() != anchors.spatial {
        return Err(Error::shape(
            "decode",
            format!("{}x{:?}", anchors.num_anchors, anchors.spatial),
            format!("{}x{:?}", reg.num_anchors(), reg.spatial()),
        ));
    }
    anchors
        .boxes
        .iter()
        .enumerate()
        .map(|(k, anchor)| decode_one(reg.offsets(k), anchor))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FeatureMap;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        let [x0, y0, x1, y1] = b(3.0, 4.0, 2.0, 6.0).corners();
        assert!(x1 > x0 && y1 > y0);
    }

    #[test]
    fn iou_examples() {
        let a = b(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(10.0, 10.0, 2.0, 2.0)), 0.0);
        // touching edges share no area
        assert_eq!(iou(&a, &b(3.0, 1.0, 2.0, 2.0)), 0.0);
        assert_relative_eq!(iou(&a, &b(2.0, 1.0, 2.0, 2.0)), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn region_conversions() {
        let r = Region::from_values(&[0.0, 0.0, 4.0, 2.0]).unwrap();
        assert_eq!(region_to_bbox(&r).unwrap(), b(2.0, 1.0, 4.0, 2.0));

        let sq = Region::Poly8([1.0, 1.0, 5.0, 1.0, 5.0, 5.0, 1.0, 5.0]);
        assert_eq!(region_to_bbox(&sq).unwrap(), b(3.0, 3.0, 4.0, 4.0));

        let h = 2f64.sqrt() / 2.0;
        let diamond = Region::Poly8([0.0, -h, h, 0.0, 0.0, h, -h, 0.0]);
        let got = region_to_bbox(&diamond).unwrap();
        assert_relative_eq!(got.cx, 0.0);
        assert_relative_eq!(got.cy, 0.0);
        assert_relative_eq!(got.w, 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(got.h, 2f64.sqrt(), epsilon = 1e-15);

        assert!(matches!(
            Region::<f64>::from_values(&[1.0, 2.0, 3.0]),
            Err(Error::MalformedRegion(3))
        ));
    }

    fn cfg(scales: Vec<f64>, ratios: Vec<f64>, spatial: (usize, usize)) -> AnchorConfig<f64> {
        AnchorConfig {
            stride: 8,
            scales,
            ratios,
            spatial,
            window: 8.0 * spatial.1 as f64,
        }
    }

    #[test]
    fn single_anchor_sits_at_window_center() {
        let grid = make_anchors(&cfg(vec![8.0], vec![1.0], (1, 1))).unwrap();
        assert_eq!(grid.boxes, vec![b(4.0, 4.0, 8.0, 8.0)]);

        let mut c = cfg(vec![8.0], vec![1.0], (1, 1));
        c.window = 255.0;
        assert_eq!(make_anchors(&c).unwrap().boxes[0], b(127.5, 127.5, 8.0, 8.0));
    }

    #[test]
    fn anchor_shapes_and_counts() {
        let grid = make_anchors(&cfg(vec![8.0], vec![4.0], (1, 1))).unwrap();
        assert_relative_eq!(grid.boxes[0].w, 16.0);
        assert_relative_eq!(grid.boxes[0].h, 4.0);

        let c = cfg(vec![8.0], vec![0.33, 0.5, 1.0, 2.0, 3.0], (25, 25));
        assert_eq!(c.num_anchors(), 5);
        let grid = make_anchors(&c).unwrap();
        assert_eq!(grid.len(), 5 * 25 * 25);
        assert!(grid.boxes.iter().all(|a| a.w > 0.0 && a.h > 0.0));
        // center cell of the odd grid is the window center
        let center = grid.boxes[12 * 25 + 12];
        assert_relative_eq!(center.cx, 100.0);
        assert_eq!(grid.unravel(25 * 25 + 26), (1, 1, 1));

        assert!(make_anchors(&cfg(vec![], vec![1.0], (1, 1))).is_err());
        assert!(make_anchors(&cfg(vec![8.0], vec![], (1, 1))).is_err());
    }

    #[test]
    fn decode_examples() {
        let anchor = b(0.0, 0.0, 10.0, 10.0);
        let got = decode_one([0.1, -0.2, 2f64.ln(), 0.0], &anchor).unwrap();
        assert_relative_eq!(got.cx, 1.0, epsilon = 1e-12);
        assert_relative_eq!(got.cy, -2.0, epsilon = 1e-12);
        assert_relative_eq!(got.w, 20.0, epsilon = 1e-12);
        assert_relative_eq!(got.h, 10.0, epsilon = 1e-12);

        let off = encode(&b(1.0, -2.0, 20.0, 10.0), &anchor);
        assert_relative_eq!(off[0], 0.1);
        assert_relative_eq!(off[1], -0.2);
        assert_relative_eq!(off[2], 2f64.ln());
        assert_relative_eq!(off[3], 0.0);
        assert_eq!(encode(&anchor, &anchor), [0.0; 4]);
    }

    #[test]
    fn decode_field_identity_and_shape_check() {
        let grid = make_anchors(&cfg(vec![8.0, 16.0], vec![1.0], (3, 4))).unwrap();
        let zeros = RegMap::new(FeatureMap::zeros(4 * 2, 3, 4)).unwrap();
        assert_eq!(decode(&zeros, &grid).unwrap(), grid.boxes);

        let wrong = RegMap::new(FeatureMap::<f64>::zeros(4, 3, 4)).unwrap();
        assert!(matches!(decode(&wrong, &grid), Err(Error::ShapeMismatch { .. })));
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64)
            .prop_map(|(cx, cy, w, h)| b(cx, cy, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box(), t in -100.0..100.0f64) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
            let moved = iou(&a.translate(t, t), &c.translate(t, t));
            prop_assert!((moved - v).abs() <= 1e-9);
        }

        #[test]
        fn encode_decode_roundtrip(gt in arb_box(), anchor in arb_box()) {
            let back = decode_one(encode(&gt, &anchor), &anchor).unwrap();
            for (x, y) in [(back.cx, gt.cx), (back.cy, gt.cy), (back.w, gt.w), (back.h, gt.h)] {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
