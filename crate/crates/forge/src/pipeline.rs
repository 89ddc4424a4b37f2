//! Damage filtering, background pairing and multiband fusion into a labelled
//! dataset.
//!
//! Backgrounds are drawn with `ChaCha8Rng::seed_from_u64(seed)` before any
//! image work starts, so the pairing depends only on the seed and the sorted
//! directory listings. Fusion runs in parallel; results are collected in
//! work-item order and the manifest is sorted by (damage, background, index).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pave_forge_core::ops::upsample_bilinear;
use pave_forge_core::pyramid::{build_laplacian, fuse, make_weight_map, max_levels, WeightMap};
use pave_forge_core::scharr::{assess_salience, compute_gradients, extract_feature_mask, SalienceReport};
use pave_forge_core::{BinaryMask, Image, PixelRect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::formats::{DamageClass, Manifest, ManifestRecord, MaskMode, PipelineConfig, YoloLabel, MANIFEST_FILE};
use crate::io::{list_images, load_image, save_image};
use crate::split::{materialize, split_dataset, SplitWarning};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredImage {
    pub name: String,
    pub class: DamageClass,
    pub report: SalienceReport,
}

#[derive(Clone, Debug)]
pub struct AugmentOutcome {
    pub manifest: Manifest,
    /// Every damage image with its salience score, kept or not.
    pub scores: Vec<ScoredImage>,
    pub split_warnings: Vec<SplitWarning>,
}

impl AugmentOutcome {
    pub fn excluded(&self) -> impl Iterator<Item = &ScoredImage> {
        self.scores.iter().filter(|s| !s.report.passed)
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Bilinear resize to `height x width`.
pub fn resize(image: &Image, height: usize, width: usize) -> Result<Image> {
    if image.height() == height && image.width() == width {
        return Ok(image.clone());
    }
    Ok(Image::from_tensor(&upsample_bilinear(&image.to_tensor(), height, width)?, 0)?)
}

/// Salience of an image, scored on its grayscale version.
pub fn score_image(image: &Image, threshold: f64) -> Result<SalienceReport> {
    Ok(assess_salience(&compute_gradients(&image.to_grayscale())?, threshold))
}

/// Bounding rectangle of the strongest gradients, `None` for a flat image.
pub fn feature_rect(image: &Image, quantile: f64) -> Result<Option<PixelRect>> {
    let field = compute_gradients(&image.to_grayscale())?;
    Ok(extract_feature_mask(&field, quantile)?.bounds)
}

pub fn rect_mask(height: usize, width: usize, rect: &PixelRect) -> Result<BinaryMask> {
    let bits = (0..height * width)
        .map(|i| {
            let (y, x) = (i / width, i % width);
            (rect.top..=rect.bottom).contains(&y) && (rect.left..=rect.right).contains(&x)
        })
        .collect();
    Ok(BinaryMask::new(height, width, bits)?)
}

/// Fuses `foreground` onto `background` (resized to match) with the given
/// foreground weight. Channel counts are promoted to RGB if they differ.
pub fn fuse_onto(foreground: &Image, background: &Image, weight: &WeightMap, levels: usize) -> Result<Image> {
    let (h, w) = (foreground.height(), foreground.width());
    let mut bg = resize(background, h, w)?;
    let mut fg = foreground.clone();
    if fg.channels() != bg.channels() {
        fg = fg.to_rgb();
        bg = bg.to_rgb();
    }
    let levels = levels.min(max_levels(h, w));
    if levels < 2 {
        bail!("{h}x{w} image is too small for a two-level pyramid");
    }
    let lp_fg = build_laplacian(&fg, levels)?;
    let lp_bg = build_laplacian(&bg, levels)?;
    Ok(fuse(&lp_fg, &lp_bg, weight)?)
}

struct Damage {
    path: PathBuf,
    class: DamageClass,
    image: Image,
    rect: PixelRect,
    weight: WeightMap,
}

struct WorkItem {
    damage: usize,
    background: usize,
    index: usize,
}

/// Scores, pairs and fuses; writes `images/` and `labels/` under the output
/// directory. The returned manifest has no split assigned.
pub fn generate(config: &PipelineConfig) -> Result<(Manifest, Vec<ScoredImage>)> {
    config.validate()?;
    let damage_paths = list_images(&config.damage_dir)?;
    let background_paths = list_images(&config.background_dir)?;

    let mut scores = Vec::new();
    let mut kept = Vec::new();
    for path in &damage_paths {
        let name = file_name(path);
        let class = DamageClass::from_file_name(&name)
            .ok_or_else(|| anyhow!("{}: file name lacks a KC_, LF_ or XB_ class prefix", path.display()))?;
        let image = load_image(path)?;
        let report = score_image(&image, config.salience_threshold).with_context(|| format!("{}", path.display()))?;
        scores.push(ScoredImage {
            name,
            class,
            report,
        });
        if !report.passed {
            continue;
        }
        let rect = feature_rect(&image, config.mask_quantile)?
            .ok_or_else(|| anyhow!("{}: no gradient features", path.display()))?;
        let (h, w) = (image.height(), image.width());
        let weight = match config.mask_mode {
            MaskMode::Feature => make_weight_map(&rect_mask(h, w, &rect)?, config.feather_sigma)?,
            MaskMode::Full => WeightMap::uniform(h, w, 1.0)?,
        };
        kept.push(Damage {
            path: path.clone(),
            class,
            image,
            rect,
            weight,
        });
    }
    if kept.is_empty() {
        let list: Vec<String> = scores.iter().map(|s| format!("{} {:.6}", s.name, s.report.score)).collect();
        bail!(
            "no damage image reaches salience threshold {}; scores: {}",
            config.salience_threshold,
            list.join(", ")
        );
    }

    let backgrounds: Vec<Image> = background_paths.iter().map(|p| load_image(p)).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = Vec::new();
    for class in DamageClass::ALL {
        let members: Vec<usize> = (0..kept.len()).filter(|&i| kept[i].class == class).collect();
        if members.is_empty() {
            continue;
        }
        let count = config.target_per_class.unwrap_or(members.len() * config.pairs_per_damage);
        for i in 0..count {
            work.push(WorkItem {
                damage: members[i % members.len()],
                background: rng.gen_range(0..backgrounds.len()),
                index: i / members.len(),
            });
        }
    }
    work.sort_by(|a, b| {
        let key = |w: &WorkItem| (file_name(&kept[w.damage].path), file_name(&background_paths[w.background]), w.index);
        key(a).cmp(&key(b))
    });

    let out = &config.output_dir;
    let records = work
        .par_iter()
        .map(|item| -> Result<ManifestRecord> {
            let d = &kept[item.damage];
            let bg_path = &background_paths[item.background];
            let fused = fuse_onto(&d.image, &backgrounds[item.background], &d.weight, config.pyramid_levels)
                .with_context(|| format!("fusing {} onto {}", d.path.display(), bg_path.display()))?;
            let (h, w) = (fused.height(), fused.width());
            let r = d.rect;
            let label = YoloLabel::from_pixel_box(
                d.class.id(),
                r.left as f64,
                r.top as f64,
                (r.right + 1) as f64,
                (r.bottom + 1) as f64,
                w,
                h,
            );
            let base = format!("{}_{}_{:03}", stem(&d.path), stem(bg_path), item.index);
            let image = format!("images/{base}.png");
            let label_file = format!("labels/{base}.txt");
            save_image(&out.join(&image), &fused)?;
            let label_path = out.join(&label_file);
            std::fs::create_dir_all(out.join("labels"))?;
            std::fs::write(&label_path, label.to_line())
                .with_context(|| format!("cannot write label {}", label_path.display()))?;
            Ok(ManifestRecord {
                image,
                label_file,
                damage: file_name(&d.path),
                background: file_name(bg_path),
                class: d.class,
                label,
                width: w,
                height: h,
                split: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Manifest { records }, scores))
}

/// The full run: generate, split, move into `{train,test,val}/{images,labels}`
/// and write `manifest.tsv`.
pub fn run_augment(config: &PipelineConfig) -> Result<AugmentOutcome> {
    let (mut manifest, scores) = generate(config)?;
    let split_warnings = split_dataset(&mut manifest, &config.split, config.seed);
    materialize(&config.output_dir, &mut manifest)?;
    for sub in ["images", "labels"] {
        let staging = config.output_dir.join(sub);
        if staging.is_dir() && std::fs::read_dir(&staging)?.next().is_none() {
            std::fs::remove_dir(&staging)?;
        }
    }
    manifest.write(&config.output_dir.join(MANIFEST_FILE))?;
    Ok(AugmentOutcome {
        manifest,
        scores,
        split_warnings,
    })
}
