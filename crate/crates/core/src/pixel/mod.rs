//! Pixel-level fusion by multi-level latent low-rank decomposition.
//!
//! A projection `L` learned by [`latlrr::solve_latlrr`] maps vectorized
//! patches to their detail component. Each level removes `fold(L * patches)`
//! from its input and hands the remainder (the base) to the next level.
//! Details of the two modalities are blended per patch with nuclear-norm
//! weights and the final bases are averaged.

pub mod latlrr;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::siamese::triplicate_tir;
use crate::tensor::FeatureMap;
use latlrr::{nuclear_norm, solve_latlrr, LatLrrOptions, LatLrrSolution};

/// Grayscale image, `rows x cols`.
pub type GrayImage<T> = DMatrix<T>;

/// Rec. 601 luma of a 3-channel map, or the plane itself for one channel.
pub fn luminance<T: Scalar>(img: &FeatureMap<T>) -> Result<GrayImage<T>> {
    let (c, h, w) = img.shape();
    match c {
        1 => Ok(DMatrix::from_row_slice(h, w, img.channel(0))),
        3 => {
            let (kr, kg, kb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
            let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
            Ok(DMatrix::from_fn(h, w, |i, j| {
                let k = i * w + j;
                kr * r[k] + kg * g[k] + kb * b[k]
            }))
        }
        _ => Err(Error::shape("luminance channels", "1 or 3", c)),
    }
}

/// Replicates a grayscale image into three identical channels.
pub fn gray_to_rgb<T: Scalar>(img: &GrayImage<T>) -> Result<FeatureMap<T>> {
    let (h, w) = img.shape();
    let plane: Vec<T> = (0..h).flat_map(|i| (0..w).map(move |j| img[(i, j)])).collect();
    triplicate_tir(&FeatureMap::from_vec(1, h, w, plane)?)
}

/// Top-left offsets of the sliding patch windows along both axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub side: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub shape: (usize, usize),
}

fn offsets(len: usize, side: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=len - side).step_by(stride).collect();
    if *v.last().expect("len >= side") + side < len {
        v.push(len - side);
    }
    v
}

impl PatchGrid {
    pub fn new(shape: (usize, usize), side: usize, stride: usize) -> Result<Self> {
        if side == 0 || stride == 0 {
            return Err(Error::param("pixel.patch", "patch side and stride must be positive"));
        }
        if shape.0 < side || shape.1 < side {
            return Err(Error::shape(
                "PatchGrid",
                format!("image at least {side}x{side}"),
                format!("{}x{}", shape.0, shape.1),
            ));
        }
        Ok(Self {
            side,
            rows: offsets(shape.0, side, stride),
            cols: offsets(shape.1, side, stride),
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_dim(&self) -> usize {
        self.side * self.side
    }

    /// One column per window, row-major inside the window.
    pub fn unfold<T: Scalar>(&self, img: &GrayImage<T>) -> Result<DMatrix<T>> {
        if img.shape() != self.shape {
            return Err(Error::shape("unfold", format!("{:?}", self.shape), format!("{:?}", img.shape())));
        }
        let s = self.side;
        let mut out = DMatrix::zeros(s * s, self.len());
        for (ri, &r) in self.rows.iter().enumerate() {
            for (ci, &c) in self.cols.iter().enumerate() {
                let col = ri * self.cols.len() + ci;
                for u in 0..s {
                    for v in 0..s {
                        out[(u * s + v, col)] = img[(r + u, c + v)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`unfold`](Self::unfold); overlapping pixels are averaged.
    pub fn fold<T: Scalar>(&self, patches: &DMatrix<T>) -> Result<GrayImage<T>> {
        let s = self.side;
        if patches.shape() != (s * s, self.len()) {
            return Err(Error::shape(
                "fold",
                format!("{}x{}", s * s, self.len()),
                format!("{:?}", patches.shape()),
            ));
        }
        let mut sum = DMatrix::<T>::zeros(self.shape.0, self.shape.1);
        let mut count = DMatrix::<T>::zeros(self.shape.0, self.shape.1);
        for (ri, &r) in self.rows.iter().enumerate() {
            for (ci, &c) in self.cols.iter().enumerate() {
                let col = ri * self.cols.len() + ci;
                for u in 0..s {
                    for v in 0..s {
                        sum[(r + u, c + v)] += patches[(u * s + v, col)];
                        count[(r + u, c + v)] += T::one();
                    }
                }
            }
        }
        Ok(sum.component_div(&count))
    }
}

/// Learned detail operator acting on vectorized `side x side` patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T: Scalar> {
    l: DMatrix<T>,
    side: usize,
}

impl<T: Scalar> ProjectionMatrix<T> {
    pub fn new(l: DMatrix<T>, side: usize) -> Result<Self> {
        let p = side * side;
        if side == 0 || l.shape() != (p, p) {
            return Err(Error::shape("ProjectionMatrix", format!("{p}x{p}"), format!("{:?}", l.shape())));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("ProjectionMatrix", "entries must be finite"));
        }
        Ok(Self { l, side })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            l: DMatrix::zeros(side * side, side * side),
            side,
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn patch_side(&self) -> usize {
        self.side
    }
}

/// Learns the projection from a `p x n` matrix of vectorized patches.
pub fn train_projection<T: Scalar>(
    patches: &DMatrix<T>,
    side: usize,
    opts: &LatLrrOptions,
) -> Result<(ProjectionMatrix<T>, LatLrrSolution<T>)> {
    if patches.ncols() == 0 {
        return Err(Error::Data("empty training patch set".into()));
    }
    if patches.nrows() != side * side {
        return Err(Error::shape("train_projection", side * side, patches.nrows()));
    }
    let sol = solve_latlrr(patches, opts)?;
    Ok((ProjectionMatrix::new(sol.l.clone(), side)?, sol))
}

/// Procedural texture patches: oriented gratings, step edges, blobs and
/// checkerboards with random amplitude and phase, each column one patch.
pub fn synthetic_training_patches<T: Scalar>(seed: u64, count: usize, side: usize) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = side * side;
    let mut out = DMatrix::zeros(p, count);
    for k in 0..count {
        let kind = k % 4;
        let amp: f64 = rng.random_range(0.2..1.0);
        let offset: f64 = rng.random_range(0.0..0.5);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let freq: f64 = rng.random_range(0.15..1.2);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (cx, cy): (f64, f64) = (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64));
        let radius: f64 = rng.random_range(1.5..side as f64 / 2.0);
        let cell = rng.random_range(2..=(side / 2).max(2));
        for u in 0..side {
            for v in 0..side {
                let (x, y) = (v as f64, u as f64);
                let proj = x * theta.cos() + y * theta.sin();
                let value = match kind {
                    0 => 0.5 + 0.5 * (freq * proj + phase).sin(),
                    1 => f64::from(proj > cx * theta.cos() + cy * theta.sin()),
                    2 => (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * radius * radius)).exp(),
                    _ => f64::from(((u / cell) + (v / cell)) % 2 == 0),
                };
                let noise: f64 = rng.random_range(-0.02..0.02);
                out[(u * side + v, k)] = T::lit(offset + amp * value + noise);
            }
        }
    }
    out
}

/// One decomposition level: its detail in patch form and folded back.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailLayer<T: Scalar> {
    pub patches: DMatrix<T>,
    pub image: GrayImage<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T: Scalar> {
    pub grid: PatchGrid,
    pub details: Vec<DetailLayer<T>>,
    pub base: GrayImage<T>,
}

impl<T: Scalar> Decomposition<T> {
    /// Sum of all detail images plus the base.
    pub fn reconstruct(&self) -> GrayImage<T> {
        self.details.iter().fold(self.base.clone(), |acc, d| acc + &d.image)
    }
}

/// Splits `img` into `levels` detail layers and a base.
pub fn decompose<T: Scalar>(
    img: &GrayImage<T>,
    proj: &ProjectionMatrix<T>,
    levels: usize,
    stride: usize,
) -> Result<Decomposition<T>> {
    if levels == 0 {
        return Err(Error::param("pixel.level", "must be at least 1"));
    }
    let grid = PatchGrid::new(img.shape(), proj.patch_side(), stride)?;
    let mut current = img.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let patches = proj.matrix() * grid.unfold(&current)?;
        let image = grid.fold(&patches)?;
        current -= &image;
        details.push(DetailLayer { patches, image });
    }
    Ok(Decomposition {
        grid,
        details,
        base: current,
    })
}

/// Per-patch nuclear-norm weights `(w_a, w_b)`; equal when both norms vanish.
pub fn detail_weights<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> (T, T) {
    let (na, nb) = (nuclear_norm(a), nuclear_norm(b));
    let sum = na + nb;
    if sum > T::zero() {
        (na / sum, nb / sum)
    } else {
        let half = T::lit(0.5);
        (half, half)
    }
}

/// Blends two detail layers patch by patch with nuclear-norm weights.
/// Inputs are `p x n` with each column a row-major `side x side` patch.
pub fn fuse_detail<T: Scalar>(d_rgb: &DMatrix<T>, d_tir: &DMatrix<T>, side: usize) -> Result<DMatrix<T>> {
    if d_rgb.shape() != d_tir.shape() {
        return Err(Error::shape("fuse_detail", format!("{:?}", d_rgb.shape()), format!("{:?}", d_tir.shape())));
    }
    if d_rgb.nrows() != side * side {
        return Err(Error::shape("fuse_detail patch", side * side, d_rgb.nrows()));
    }
    let mut out = DMatrix::zeros(d_rgb.nrows(), d_rgb.ncols());
    for k in 0..d_rgb.ncols() {
        let pa = DMatrix::from_row_slice(side, side, d_rgb.column(k).as_slice());
        let pb = DMatrix::from_row_slice(side, side, d_tir.column(k).as_slice());
        let (wa, wb) = detail_weights(&pa, &pb);
        out.set_column(k, &(d_rgb.column(k) * wa + d_tir.column(k) * wb));
    }
    Ok(out)
}

pub fn fuse_base<T: Scalar>(b_rgb: &GrayImage<T>, b_tir: &GrayImage<T>) -> Result<GrayImage<T>> {
    if b_rgb.shape() != b_tir.shape() {
        return Err(Error::shape("fuse_base", format!("{:?}", b_rgb.shape()), format!("{:?}", b_tir.shape())));
    }
    Ok((b_rgb + b_tir) * T::lit(0.5))
}

/// Which decomposition level produces the fused image. Exactly one level is
/// active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSelector {
    level: usize,
    max_level: usize,
}

impl LevelSelector {
    pub const DEFAULT_MAX_LEVEL: usize = 4;

    pub fn new(level: usize) -> Result<Self> {
        if level == 0 || level > Self::DEFAULT_MAX_LEVEL {
            return Err(Error::param("pixel.level", format!("must lie in 1..={}", Self::DEFAULT_MAX_LEVEL)));
        }
        Ok(Self {
            level,
            max_level: Self::DEFAULT_MAX_LEVEL,
        })
    }

    pub fn from_one_hot(flags: &[bool]) -> Result<Self> {
        let active: Vec<usize> = flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i + 1).collect();
        match active.as_slice() {
            [level] => Ok(Self {
                level: *level,
                max_level: flags.len(),
            }),
            _ => Err(Error::param("pixel.level", "exactly one level must be selected")),
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn one_hot(&self) -> Vec<bool> {
        (1..=self.max_level).map(|l| l == self.level).collect()
    }
}

impl Default for LevelSelector {
    fn default() -> Self {
        Self::new(2).expect("level 2 is valid")
    }
}

/// Which images feed the two network streams after pixel fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Fused image in both streams.
    FusedFused,
    /// Fused image in the first stream, the original thermal image in the second.
    FusedTir,
}

impl FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused_fused" => Ok(Self::FusedFused),
            "fused_tir" => Ok(Self::FusedTir),
            other => Err(Error::Config(format!("pairing must be fused_fused or fused_tir, got `{other}`"))),
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FusedFused => "fused_fused",
            Self::FusedTir => "fused_tir",
        })
    }
}

/// Fuses two aligned grayscale images up to the selected level.
pub fn fuse_gray<T: Scalar>(
    rgb: &GrayImage<T>,
    tir: &GrayImage<T>,
    proj: &ProjectionMatrix<T>,
    level: LevelSelector,
    stride: usize,
) -> Result<GrayImage<T>> {
    if rgb.shape() != tir.shape() {
        return Err(Error::shape("fuse_images", format!("{:?}", rgb.shape()), format!("{:?}", tir.shape())));
    }
    let a = decompose(rgb, proj, level.level(), stride)?;
    let b = decompose(tir, proj, level.level(), stride)?;
    let mut fused = fuse_base(&a.base, &b.base)?;
    for (da, db) in a.details.iter().zip(&b.details) {
        let patches = fuse_detail(&da.patches, &db.patches, proj.patch_side())?;
        fused += a.grid.fold(&patches)?;
    }
    Ok(fused)
}

/// Fuses an RGB/TIR frame pair and returns the two stream inputs, each a
/// 3-channel map.
pub fn fuse_images<T: Scalar>(
    rgb: &FeatureMap<T>,
    tir: &FeatureMap<T>,
    proj: &ProjectionMatrix<T>,
    level: LevelSelector,
    pairing: Pairing,
    stride: usize,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    if (rgb.height(), rgb.width()) != (tir.height(), tir.width()) {
        return Err(Error::shape(
            "fuse_images",
            format!("{}x{}", rgb.height(), rgb.width()),
            format!("{}x{}", tir.height(), tir.width()),
        ));
    }
    let tir_gray = luminance(tir)?;
    let fused = gray_to_rgb(&fuse_gray(&luminance(rgb)?, &tir_gray, proj, level, stride)?)?;
    let second = match pairing {
        Pairing::FusedFused => fused.clone(),
        Pairing::FusedTir => gray_to_rgb(&tir_gray)?,
    };
    Ok((fused, second))
}
