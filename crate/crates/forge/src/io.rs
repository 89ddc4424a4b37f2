//! PNG / PPM / PGM images to and from [`Image`].
//!
//! Samples map to `[0, 1]` by dividing by 255 on load. On save they are
//! clamped and quantised with `floor(v * 255 + 0.5)`. Gray inputs stay single
//! channel. Anything carrying colour becomes RGB, and alpha is dropped.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{DynamicImage, ExtendedColorType, ImageReader};
use pave_forge_core::Image;

/// Extensions picked up when listing an image directory.
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

pub fn load_image(path: &Path) -> Result<Image> {
    let decoded = ImageReader::open(path)
        .with_context(|| format!("cannot open image {}", path.display()))?
        .with_guessed_format()
        .with_context(|| format!("cannot read image {}", path.display()))?
        .decode()
        .with_context(|| format!("cannot decode image {}", path.display()))?;
    to_image(&decoded).with_context(|| format!("unusable image {}", path.display()))
}

fn to_image(decoded: &DynamicImage) -> Result<Image> {
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, raw) = if decoded.color().has_color() {
        (3, decoded.to_rgb8().into_raw())
    } else {
        (1, decoded.to_luma8().into_raw())
    };
    let samples: Vec<f64> = raw.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image::from_interleaved(h, w, channels, &samples)?)
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes `image` in the format implied by the file extension.
pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    let bytes: Vec<u8> = image.to_interleaved().into_iter().map(quantize).collect();
    let color = match image.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        c => bail!("cannot save a {c}-channel image"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    image::save_buffer(path, &bytes, image.width() as u32, image.height() as u32, color)
        .with_context(|| format!("cannot write image {}", path.display()))
}

pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot list directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("cannot list directory {}", dir.display()))?.path();
        if path.is_file() && is_image_file(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        bail!("no images (png, ppm, pgm) in {}", dir.display());
    }
    Ok(files)
}
