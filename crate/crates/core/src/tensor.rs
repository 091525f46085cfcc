//! Dense `C x H x W` maps and the classification / regression views over them.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel-major dense feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::param("feature map", "dimensions must be at least 1"));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "FeatureMap::from_vec",
                channels * height * width,
                data.len(),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Stacks equally sized planes into channels.
    pub fn from_planes(planes: &[Vec<T>], height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for p in planes {
            if p.len() != height * width {
                return Err(Error::shape("FeatureMap::from_planes", height * width, p.len()));
            }
            data.extend_from_slice(p);
        }
        Self::from_vec(planes.len(), height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> T {
        self.data[(c * self.height + i) * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: T) {
        self.data[(c * self.height + i) * self.width + j] = v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// `a * self + b * other`, elementwise.
    pub fn blend(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.ensure_same_shape(other, "FeatureMap::blend")?;
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
            ..*self
        })
    }

    /// Spatial window `[top, top+height) x [left, left+width)` of every channel.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::shape(
                "FeatureMap::crop",
                format!("window inside {}x{}", self.height, self.width),
                format!("[{top}+{height}, {left}+{width}]"),
            ));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for i in top..top + height {
                let row = (c * self.height + i) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + width]);
            }
        }
        Self::from_vec(self.channels, height, width, data)
    }

    pub fn ensure_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                context,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Two-class scores, channels laid out `[background | foreground] x A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsMap<T> {
    map: FeatureMap<T>,
}

/// Four offsets per anchor, channels laid out `[dx | dy | dw | dh] x A`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegMap<T> {
    map: FeatureMap<T>,
}

impl<T: Scalar> ClsMap<T> {
    pub fn new(map: FeatureMap<T>) -> Result<Self> {
        if !map.channels().is_multiple_of(2) {
            return Err(Error::shape("ClsMap", "2*A channels", map.channels()));
        }
        Ok(Self { map })
    }

    /// Builds a map from separate background and foreground fields of length `A*H*W`.
    pub fn from_parts(
        background: &[T],
        foreground: &[T],
        num_anchors: usize,
        spatial: (usize, usize),
    ) -> Result<Self> {
        let n = num_anchors * spatial.0 * spatial.1;
        if background.len() != n || foreground.len() != n {
            return Err(Error::shape("ClsMap::from_parts", n, background.len().max(foreground.len())));
        }
        let mut data = Vec::with_capacity(2 * n);
        data.extend_from_slice(background);
        data.extend_from_slice(foreground);
        Self::new(FeatureMap::from_vec(2 * num_anchors, spatial.0, spatial.1, data)?)
    }

    pub fn num_anchors(&self) -> usize {
        self.map.channels() / 2
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.map.height(), self.map.width())
    }

    /// Number of scored locations `A*H*W`.
    pub fn len(&self) -> usize {
        self.map.data().len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn background(&self) -> &[T] {
        &self.map.data()[..self.len()]
    }

    pub fn foreground(&self) -> &[T] {
        &self.map.data()[self.len()..]
    }

    pub fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        let n = self.len();
        self.map.data_mut().split_at_mut(n)
    }

    pub fn as_map(&self) -> &FeatureMap<T> {
        &self.map
    }

    pub fn into_map(self) -> FeatureMap<T> {
        self.map
    }
}

impl<T: Scalar> RegMap<T> {
    pub fn new(map: FeatureMap<T>) -> Result<Self> {
        if !map.channels().is_multiple_of(4) {
            return Err(Error::shape("RegMap", "4*A channels", map.channels()));
        }
        Ok(Self { map })
    }

    pub fn num_anchors(&self) -> usize {
        self.map.channels() / 4
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.map.height(), self.map.width())
    }

    pub fn len(&self) -> usize {
        self.map.data().len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offsets of the `k`-th location in `A*H*W` order.
    #[inline]
    pub fn offsets(&self, k: usize) -> [T; 4] {
        let n = self.len();
        let d = self.map.data();
        [d[k], d[n + k], d[2 * n + k], d[3 * n + k]]
    }

    pub fn as_map(&self) -> &FeatureMap<T> {
        &self.map
    }

    pub fn into_map(self) -> FeatureMap<T> {
        self.map
    }
}
