//! Text formats: pipeline config, YOLO labels, `manifest.tsv`, detection and
//! ground-truth lists, discriminator score files.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, ensure, Context, Result};
use pave_forge_core::boxes::BBox;
use pave_forge_core::metrics::{Detection, GroundTruth};
use pave_forge_core::pyramid::{DEFAULT_FEATHER_SIGMA, DEFAULT_LEVELS};
use pave_forge_core::scharr::{DEFAULT_MASK_QUANTILE, DEFAULT_SALIENCE_THRESHOLD};

/// Damage classes, carried by the `KC_` / `LF_` / `XB_` filename prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DamageClass {
    /// Pothole.
    Kc,
    /// Crack.
    Lf,
    /// Patch.
    Xb,
}

impl DamageClass {
    pub const ALL: [DamageClass; 3] = [DamageClass::Kc, DamageClass::Lf, DamageClass::Xb];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn code(self) -> &'static str {
        match self {
            DamageClass::Kc => "KC",
            DamageClass::Lf => "LF",
            DamageClass::Xb => "XB",
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn from_file_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| name.strip_prefix(c.code()).is_some_and(|r| r.starts_with('_')))
    }
}

impl fmt::Display for DamageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DamageClass {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| anyhow!("unknown class `{s}` (expected KC, LF or XB)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratios {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Self {
            train: 0.8,
            test: 0.1,
            val: 0.1,
        }
    }
}

impl Ratios {
    pub fn new(train: f64, test: f64, val: f64) -> Result<Self> {
        let r = Self { train, test, val };
        ensure!(
            [train, test, val].iter().all(|v| v.is_finite() && *v > 0.0),
            "split ratios must be positive, got {r}"
        );
        ensure!((train + test + val - 1.0).abs() <= 1e-9, "split ratios must sum to 1, got {r}");
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.test, self.val]
    }
}

impl fmt::Display for Ratios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.train, self.test, self.val)
    }
}

impl FromStr for Ratios {
    type Err = anyhow::Error;

    /// `train,test,val`, e.g. `0.8,0.1,0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad split `{s}`"))?;
        ensure!(parts.len() == 3, "split needs three ratios (train,test,val), got `{s}`");
        Ratios::new(parts[0], parts[1], parts[2])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskMode {
    /// Foreground is the feature bounding rectangle, feathered.
    #[default]
    Feature,
    /// Foreground weight 1 over the whole frame: every output reproduces its damage image.
    Full,
}

impl FromStr for MaskMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(MaskMode::Feature),
            "full" => Ok(MaskMode::Full),
            _ => bail!("unknown mask_mode `{s}` (expected feature or full)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub damage_dir: PathBuf,
    pub background_dir: PathBuf,
    pub output_dir: PathBuf,
    pub salience_threshold: f64,
    pub mask_quantile: f64,
    pub pyramid_levels: usize,
    pub feather_sigma: f64,
    pub pairs_per_damage: usize,
    pub seed: u64,
    pub split: Ratios,
    /// When set, each class gets exactly this many outputs, cycling over its
    /// damage images; `pairs_per_damage` is then ignored.
    pub target_per_class: Option<usize>,
    pub mask_mode: MaskMode,
}

impl PipelineConfig {
    pub fn new(damage_dir: impl Into<PathBuf>, background_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            damage_dir: damage_dir.into(),
            background_dir: background_dir.into(),
            output_dir: output_dir.into(),
            salience_threshold: DEFAULT_SALIENCE_THRESHOLD,
            mask_quantile: DEFAULT_MASK_QUANTILE,
            pyramid_levels: DEFAULT_LEVELS,
            feather_sigma: DEFAULT_FEATHER_SIGMA,
            pairs_per_damage: 5,
            seed: 0,
            split: Ratios::default(),
            target_per_class: None,
            mask_mode: MaskMode::Feature,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.pairs_per_damage >= 1, "pairs_per_damage must be at least 1");
        ensure!(self.target_per_class != Some(0), "target_per_class must be at least 1");
        ensure!(self.pyramid_levels >= 2, "pyramid_levels must be at least 2");
        ensure!(
            self.mask_quantile > 0.0 && self.mask_quantile < 1.0,
            "mask_quantile must lie in (0, 1)"
        );
        ensure!(
            self.feather_sigma.is_finite() && self.feather_sigma >= 0.0,
            "feather_sigma must be finite and non-negative"
        );
        ensure!(self.salience_threshold.is_finite(), "salience_threshold must be finite");
        Ratios::new(self.split.train, self.split.test, self.split.val)?;
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Relative directories
    /// are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::new("", "", "");
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`"))?;
            ensure!(seen.insert(key.to_string()), "line {lineno}: duplicate key `{key}`");
            let bad = |e: &dyn fmt::Display| anyhow!("line {lineno}: bad value for {key}: {e}");
            let dir = |v: &str| base.join(v);
            match key {
                "damage_dir" => cfg.damage_dir = dir(value),
                "background_dir" => cfg.background_dir = dir(value),
                "output_dir" => cfg.output_dir = dir(value),
                "salience_threshold" => cfg.salience_threshold = value.parse().map_err(|e| bad(&e))?,
                "mask_quantile" => cfg.mask_quantile = value.parse().map_err(|e| bad(&e))?,
                "pyramid_levels" => cfg.pyramid_levels = value.parse().map_err(|e| bad(&e))?,
                "feather_sigma" => cfg.feather_sigma = value.parse().map_err(|e| bad(&e))?,
                "pairs_per_damage" => cfg.pairs_per_damage = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                "split" => cfg.split = value.parse().map_err(|e: anyhow::Error| bad(&e))?,
                "target_per_class" => cfg.target_per_class = Some(value.parse().map_err(|e| bad(&e))?),
                "mask_mode" => cfg.mask_mode = value.parse().map_err(|e: anyhow::Error| bad(&e))?,
                _ => bail!("line {lineno}: unknown key `{key}`"),
            }
        }
        for key in ["damage_dir", "background_dir", "output_dir"] {
            ensure!(seen.contains(key), "missing required key `{key}`");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// One YOLO label line: class and normalised centre/size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YoloLabel {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloLabel {
    /// From a pixel-edge box `[x1, x2) x [y1, y2)` in an image of the given size.
    /// Values are rounded to the six decimals written to disk, so a label
    /// read back from its file compares equal.
    pub fn from_pixel_box(class_id: u32, x1: f64, y1: f64, x2: f64, y2: f64, width: usize, height: usize) -> Self {
        let (iw, ih) = (width as f64, height as f64);
        let q = |v: f64| (v * 1e6).round() / 1e6;
        Self {
            class_id,
            cx: q((x1 + x2) / 2.0 / iw),
            cy: q((y1 + y2) / 2.0 / ih),
            w: q((x2 - x1) / iw),
            h: q((y2 - y1) / ih),
        }
    }

    /// Pixel corners `(x1, y1, x2, y2)`.
    pub fn to_pixels(&self, width: usize, height: usize) -> (f64, f64, f64, f64) {
        let (iw, ih) = (width as f64, height as f64);
        (
            (self.cx - self.w / 2.0) * iw,
            (self.cy - self.h / 2.0) * ih,
            (self.cx + self.w / 2.0) * iw,
            (self.cy + self.h / 2.0) * ih,
        )
    }

    /// The label line, newline terminated.
    pub fn to_line(&self) -> String {
        format!("{self}\n")
    }
}

impl fmt::Display for YoloLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:.6} {:.6} {:.6} {:.6}", self.class_id, self.cx, self.cy, self.w, self.h)
    }
}

impl FromStr for YoloLabel {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let f: Vec<&str> = s.split_whitespace().collect();
        ensure!(f.len() == 5, "label needs `class cx cy w h`, got `{s}`");
        let num = |i: usize| f[i].parse::<f64>().with_context(|| format!("bad number `{}`", f[i]));
        let label = Self {
            class_id: f[0].parse().with_context(|| format!("bad class `{}`", f[0]))?,
            cx: num(1)?,
            cy: num(2)?,
            w: num(3)?,
            h: num(4)?,
        };
        ensure!(
            [label.cx, label.cy, label.w, label.h].iter().all(|v| (0.0..=1.0).contains(v)),
            "label coordinates must be normalised to [0, 1]: `{s}`"
        );
        Ok(label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Val];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| anyhow!("unknown split `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    /// Output image path relative to the output directory.
    pub image: String,
    /// Label file path relative to the output directory.
    pub label_file: String,
    /// Source file names.
    pub damage: String,
    pub background: String,
    pub class: DamageClass,
    pub label: YoloLabel,
    pub width: usize,
    pub height: usize,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "image\tlabel_file\tdamage\tbackground\tclass\tcx\tcy\tw\th\twidth\theight\tsplit";

impl Manifest {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            let l = &r.label;
            let split = r.split.map_or("-", Split::name);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\n",
                r.image, r.label_file, r.damage, r.background, r.class, l.cx, l.cy, l.w, l.h, r.width, r.height, split
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        ensure!(lines.next() == Some(MANIFEST_HEADER), "manifest header missing or unexpected");
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let lineno = n + 2;
            let f: Vec<&str> = line.split('\t').collect();
            ensure!(f.len() == 12, "manifest line {lineno}: expected 12 fields, got {}", f.len());
            let class: DamageClass = f[4].parse().with_context(|| format!("manifest line {lineno}"))?;
            let label: YoloLabel = format!("{} {} {} {} {}", class.id(), f[5], f[6], f[7], f[8])
                .parse()
                .with_context(|| format!("manifest line {lineno}"))?;
            let dim = |s: &str| s.parse::<usize>().with_context(|| format!("manifest line {lineno}: bad size `{s}`"));
            let split = match f[11] {
                "-" => None,
                s => Some(s.parse().with_context(|| format!("manifest line {lineno}"))?),
            };
            records.push(ManifestRecord {
                image: f[0].to_string(),
                label_file: f[1].to_string(),
                damage: f[2].to_string(),
                background: f[3].to_string(),
                class,
                label,
                width: dim(f[9])?,
                height: dim(f[10])?,
                split,
            });
        }
        Ok(Self { records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        Self::from_tsv(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(n, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (n + 1, l.split_whitespace().collect()))
    })
}

fn parse_box(fields: &[&str], lineno: usize) -> Result<BBox> {
    let v: Vec<f64> = fields
        .iter()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("line {lineno}: bad coordinate"))?;
    BBox::new(v[0], v[1], v[2], v[3]).with_context(|| format!("line {lineno}"))
}

/// `image_id class conf x1 y1 x2 y2` per line.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    records(text)
        .map(|(n, f)| {
            ensure!(f.len() == 7, "line {n}: expected `image_id class conf x1 y1 x2 y2`");
            let class = f[1].parse().with_context(|| format!("line {n}: bad class `{}`", f[1]))?;
            let conf = f[2].parse().with_context(|| format!("line {n}: bad confidence `{}`", f[2]))?;
            Detection::new(f[0], class, parse_box(&f[3..], n)?, conf).with_context(|| format!("line {n}"))
        })
        .collect()
}

/// `image_id class x1 y1 x2 y2` per line.
pub fn parse_ground_truths(text: &str) -> Result<Vec<GroundTruth>> {
    records(text)
        .map(|(n, f)| {
            ensure!(f.len() == 6, "line {n}: expected `image_id class x1 y1 x2 y2`");
            let class = f[1].parse().with_context(|| format!("line {n}: bad class `{}`", f[1]))?;
            Ok(GroundTruth::new(f[0], class, parse_box(&f[2..], n)?))
        })
        .collect()
}

/// Discriminator outputs under `[real]` and `[fake]` headers, whitespace separated.
pub fn parse_scores(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut real, mut fake) = (Vec::new(), Vec::new());
    let mut section: Option<bool> = None;
    for (n, f) in records(text) {
        match f.as_slice() {
            ["[real]"] => section = Some(true),
            ["[fake]"] => section = Some(false),
            values => {
                let target = match section {
                    Some(true) => &mut real,
                    Some(false) => &mut fake,
                    None => bail!("line {n}: scores before a [real] or [fake] header"),
                };
                for v in values {
                    target.push(v.parse::<f64>().with_context(|| format!("line {n}: bad score `{v}`"))?);
                }
            }
        }
    }
    Ok((real, fake))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
