//! Trained pixel-fusion projection with an on-disk cache, and `fuse-image`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use rgbt::config::{Config, PixelTraining};
use rgbt::data::{load_luma, load_rgb, save_map};
use rgbt::pixel::{fuse_images, synthetic_training_patches, train_projection, LevelSelector, Pairing, ProjectionMatrix};
use rgbt::report::write_atomic;
use rgbt::Scalar;

use crate::harness::internal;
use crate::{CliError, CliResult};

fn cache_name(t: &PixelTraining) -> String {
    format!(
        "projection_p{}_n{}_seed{}_lambda{}.json",
        t.patch_side, t.patches, t.seed, t.options.lambda
    )
}

/// Trains in double precision; the result is cached under `cache_dir`
/// keyed by every training parameter.
pub fn train_f64(t: &PixelTraining, cache_dir: &Path) -> CliResult<ProjectionMatrix<f64>> {
    let path = cache_dir.join(cache_name(t));
    let p = t.patch_side * t.patch_side;
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(values) = serde_json::from_str::<Vec<f64>>(&text) {
            if values.len() == p * p {
                return Ok(ProjectionMatrix::new(DMatrix::from_vec(p, p, values), t.patch_side)?);
            }
        }
    }
    let patches = synthetic_training_patches::<f64>(t.seed, t.patches, t.patch_side);
    let (proj, _) = train_projection(&patches, t.patch_side, &t.options)?;
    let values: Vec<f64> = proj.matrix().iter().copied().collect();
    write_atomic(&path, serde_json::to_string(&values).map_err(internal)?.as_bytes())?;
    Ok(proj)
}

pub fn load_or_train<T: Scalar>(t: &PixelTraining, cache_dir: &Path) -> CliResult<ProjectionMatrix<T>> {
    let proj = train_f64(t, cache_dir)?;
    let m = proj.matrix().map(T::lit);
    Ok(ProjectionMatrix::new(m, t.patch_side)?)
}

pub fn cmd_fuse_image(
    cfg: &Config,
    rgb: &Path,
    tir: &Path,
    level: Option<u8>,
    pairing: &Option<String>,
    out: &Path,
) -> CliResult<()> {
    let level = match level {
        Some(l) => LevelSelector::new(l as usize)?,
        None => LevelSelector::new(cfg.parsed("pixel.level")?)?,
    };
    let pairing: Pairing = match pairing {
        Some(p) => p.parse()?,
        None => cfg.get("pixel.pairing").parse()?,
    };
    let training = cfg.pixel_training()?;
    let proj = load_or_train::<f64>(&training, &out.join(".cache"))?;
    let rgb_map = load_rgb::<f64>(rgb)?;
    let tir_map = load_luma::<f64>(tir)?;
    let stride: usize = cfg.parsed("pixel.stride")?;
    let stride = if stride == 0 { proj.patch_side() } else { stride };
    let (first, second) = fuse_images(&rgb_map, &tir_map, &proj, level, pairing, stride)?;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let fused = out.join("fused.png");
    save_map(&first, &fused)?;
    let second_path = out.join(match pairing {
        Pairing::FusedFused => "stream2_fused.png",
        Pairing::FusedTir => "stream2_tir.png",
    });
    save_map(&second, &second_path)?;
    println!("level {} {pairing}: {} {}", level.level(), fused.display(), second_path.display());
    Ok(())
}
