//! Paired RGB/TIR sequences on disk (VOT layout) and in memory.
//!
//! A sequence directory holds `color/` and `ir/` with frames named
//! `00000001.png`, `00000002.png`, ... and a `groundtruth.txt` with one
//! comma-separated region per line.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{region_to_bbox, BBox, Region};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

pub const COLOR_DIR: &str = "color";
pub const IR_DIR: &str = "ir";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const SEQUENCE_LIST: &str = "sequences.txt";

/// `%08d` frame file name; frames are numbered from 1.
pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("{:08}.{ext}", index + 1)
}

/// Parses groundtruth text. Trailing blank lines are ignored; any other
/// malformed line is an error carrying its 1-based line number.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<Region<f64>>> {
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    lines[..last]
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let values = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| err(format!("`{}`: {e}", v.trim()))))
                .collect::<Result<Vec<_>>>()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite coordinate".into()));
            }
            Region::from_values(&values).map_err(|e| err(e.to_string()))
        })
        .collect()
}

pub fn format_region(region: &Region<f64>) -> String {
    region.values().iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

pub fn rgb_to_map<T: Scalar>(img: &RgbImage) -> FeatureMap<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = T::one() / T::lit(255.0);
    let mut out = FeatureMap::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            out.set(c, y as usize, x as usize, T::from_usize_lossy(p.0[c] as usize) * scale);
        }
    }
    out
}

pub fn gray_to_map<T: Scalar>(img: &GrayImage) -> FeatureMap<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = T::one() / T::lit(255.0);
    let data = img.as_raw().iter().map(|&v| T::from_usize_lossy(v as usize) * scale).collect();
    FeatureMap::from_vec(1, h, w, data).expect("buffer matches dimensions")
}

fn quantize<T: Scalar>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit luma `0.299 R + 0.587 G + 0.114 B`.
pub fn luma_u8(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.get_pixel(x, y).0;
        let l = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
        image::Luma([l.round().clamp(0.0, 255.0) as u8])
    })
}

/// Converts a 1- or 3-channel map in `[0, 1]` to an 8-bit RGB image.
pub fn map_to_rgb<T: Scalar>(map: &FeatureMap<T>) -> Result<RgbImage> {
    let (c, h, w) = map.shape();
    if c != 1 && c != 3 {
        return Err(Error::shape("map_to_rgb", "1 or 3 channels", c));
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| quantize(map.get(ch.min(c - 1), y as usize, x as usize));
        Rgb([at(0), at(1), at(2)])
    }))
}

pub fn map_to_gray<T: Scalar>(map: &FeatureMap<T>) -> Result<GrayImage> {
    if map.channels() != 1 {
        return Err(Error::shape("map_to_gray", 1, map.channels()));
    }
    Ok(GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        image::Luma([quantize(map.get(0, y as usize, x as usize))])
    }))
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an RGB frame as a 3-channel map in `[0, 1]`.
pub fn load_rgb<T: Scalar>(path: &Path) -> Result<FeatureMap<T>> {
    Ok(rgb_to_map(&open_image(path)?.to_rgb8()))
}

/// Loads any image as its luma plane in `[0, 1]`.
pub fn load_luma<T: Scalar>(path: &Path) -> Result<FeatureMap<T>> {
    Ok(gray_to_map(&luma_u8(&open_image(path)?.to_rgb8())))
}

pub fn save_image(img: &image::DynamicImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Saves a map in `[0, 1]` as 8-bit grayscale (1 channel) or RGB (3 channels).
pub fn save_map<T: Scalar>(map: &FeatureMap<T>, path: &Path) -> Result<()> {
    let img = if map.channels() == 1 {
        image::DynamicImage::ImageLuma8(map_to_gray(map)?)
    } else {
        image::DynamicImage::ImageRgb8(map_to_rgb(map)?)
    };
    save_image(&img, path)
}

#[derive(Debug, Clone)]
enum FrameStore {
    Memory { rgb: Vec<RgbImage>, tir: Vec<GrayImage> },
    Disk { rgb: Vec<PathBuf>, tir: Vec<PathBuf> },
}

/// A paired sequence with at least its first-frame region.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub groundtruth: Vec<Region<f64>>,
    frames: FrameStore,
}

impl Sequence {
    pub fn from_images(name: impl Into<String>, rgb: Vec<RgbImage>, tir: Vec<GrayImage>, groundtruth: Vec<Region<f64>>) -> Result<Self> {
        let seq = Self {
            name: name.into(),
            groundtruth,
            frames: FrameStore::Memory { rgb, tir },
        };
        seq.check()?;
        Ok(seq)
    }

    fn check(&self) -> Result<()> {
        let (nr, nt) = match &self.frames {
            FrameStore::Memory { rgb, tir } => (rgb.len(), tir.len()),
            FrameStore::Disk { rgb, tir } => (rgb.len(), tir.len()),
        };
        if nr != nt {
            return Err(Error::Data(format!("{}: {nr} color frames but {nt} ir frames", self.name)));
        }
        if nr == 0 {
            return Err(Error::Data(format!("{}: no frames", self.name)));
        }
        if self.groundtruth.is_empty() {
            return Err(Error::Data(format!("{}: groundtruth is empty", self.name)));
        }
        if self.groundtruth.len() > nr {
            return Err(Error::Data(format!(
                "{}: {} groundtruth lines for {nr} frames",
                self.name,
                self.groundtruth.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match &self.frames {
            FrameStore::Memory { rgb, .. } => rgb.len(),
            FrameStore::Disk { rgb, .. } => rgb.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// RGB frame (3 channels) and thermal luma (1 channel).
    pub fn frame<T: Scalar>(&self, index: usize) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
        if index >= self.len() {
            return Err(Error::Data(format!("{}: frame {index} out of range", self.name)));
        }
        match &self.frames {
            FrameStore::Memory { rgb, tir } => Ok((rgb_to_map(&rgb[index]), gray_to_map(&tir[index]))),
            FrameStore::Disk { rgb, tir } => Ok((load_rgb(&rgb[index])?, load_luma(&tir[index])?)),
        }
    }

    pub fn gt_box(&self, index: usize) -> Result<BBox<f64>> {
        let region = self
            .groundtruth
            .get(index)
            .ok_or_else(|| Error::Data(format!("{}: no groundtruth for frame {index}", self.name)))?;
        region_to_bbox(region)
    }

    /// Axis-aligned groundtruth boxes; errors unless every frame is annotated.
    pub fn gt_boxes(&self) -> Result<Vec<BBox<f64>>> {
        if self.groundtruth.len() != self.len() {
            return Err(Error::Data(format!(
                "{}: {} groundtruth lines for {} frames",
                self.name,
                self.groundtruth.len(),
                self.len()
            )));
        }
        (0..self.len()).map(|k| self.gt_box(k)).collect()
    }

    /// Writes the sequence in VOT layout under `dir` (created if needed).
    pub fn write(&self, dir: &Path, ext: &str) -> Result<()> {
        for sub in [COLOR_DIR, IR_DIR] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for k in 0..self.len() {
            let name = frame_file_name(k, ext);
            let (rgb, tir) = match &self.frames {
                FrameStore::Memory { rgb, tir } => (
                    image::DynamicImage::ImageRgb8(rgb[k].clone()),
                    image::DynamicImage::ImageLuma8(tir[k].clone()),
                ),
                FrameStore::Disk { rgb, tir } => (open_image(&rgb[k])?, open_image(&tir[k])?),
            };
            save_image(&rgb, &dir.join(COLOR_DIR).join(&name))?;
            save_image(&tir, &dir.join(IR_DIR).join(&name))?;
        }
        let text: String = self.groundtruth.iter().map(|r| format_region(r) + "\n").collect();
        let gt = dir.join(GROUNDTRUTH_FILE);
        fs::write(&gt, text).map_err(|e| Error::io(&gt, e))
    }
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let stem_ok = path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit()));
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"));
        if stem_ok && ext_ok {
            frames.push(path);
        }
    }
    frames.sort();
    for (k, p) in frames.iter().enumerate() {
        let idx: usize = p.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()).unwrap_or(0);
        if idx != k + 1 {
            return Err(Error::Data(format!("{}: expected frame {:08}, found {}", dir.display(), k + 1, p.display())));
        }
    }
    Ok(frames)
}

/// Loads a sequence directory. Frames are read lazily.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("sequence directory {} not found", dir.display())));
    }
    let rgb = list_frames(&dir.join(COLOR_DIR))?;
    let tir = list_frames(&dir.join(IR_DIR))?;
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let groundtruth = parse_groundtruth(&text, &gt_path)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let seq = Sequence {
        name,
        groundtruth,
        frames: FrameStore::Disk { rgb, tir },
    };
    seq.check()?;
    Ok(seq)
}

/// Sequence names listed in `root/sequences.txt`, one per non-blank line.
pub fn read_sequence_list(root: &Path) -> Result<Vec<String>> {
    let path = root.join(SEQUENCE_LIST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let names: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if names.is_empty() {
        return Err(Error::Data(format!("{} lists no sequences", path.display())));
    }
    Ok(names)
}

/// Loads `dir` itself if it is a sequence, otherwise every sequence named in
/// its `sequences.txt`.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sequence>> {
    if dir.join(GROUNDTRUTH_FILE).is_file() {
        return Ok(vec![load_sequence(dir)?]);
    }
    if !dir.is_dir() {
        return Err(Error::Data(format!("dataset directory {} not found", dir.display())));
    }
    read_sequence_list(dir)?.iter().map(|n| load_sequence(&dir.join(n))).collect()
}

pub fn write_sequence_list(root: &Path, names: &[String]) -> Result<()> {
    let path = root.join(SEQUENCE_LIST);
    let text: String = names.iter().map(|n| format!("{n}\n")).collect();
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groundtruth_formats() {
        let p = Path::new("gt.txt");
        let r = parse_groundtruth("10,20,30,40\n", p).unwrap();
        assert_eq!(r, vec![Region::Rect4([10.0, 20.0, 30.0, 40.0])]);
        let poly = parse_groundtruth("10,20,40,20,40,60,10,60\n\n\n", p).unwrap();
        assert_eq!(poly.len(), 1);
        let b = region_to_bbox(&poly[0]).unwrap();
        assert_eq!(b.xywh(), [10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn groundtruth_errors_carry_line_numbers() {
        let p = Path::new("gt.txt");
        match parse_groundtruth("1,2,3,4\n1,2,x,4\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_groundtruth("1,2,3,4\n\n1,2,3,4\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_groundtruth("1,2,3\n", p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn frame_names() {
        assert_eq!(frame_file_name(0, "png"), "00000001.png");
        assert_eq!(frame_file_name(99, "jpg"), "00000100.jpg");
    }

    #[test]
    fn luma_weights() {
        let img = RgbImage::from_pixel(1, 1, Rgb([255, 0, 0]));
        assert_eq!(luma_u8(&img).get_pixel(0, 0).0[0], 76);
        let img = RgbImage::from_pixel(1, 1, Rgb([100, 150, 200]));
        assert_eq!(luma_u8(&img).get_pixel(0, 0).0[0], 141);
    }
}
