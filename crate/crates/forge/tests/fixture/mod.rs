//! Synthetic damage/background corpus written to a temporary directory.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pave_forge::io::save_image;
use pave_forge_core::Image;

/// Tiny deterministic generator so fixtures do not depend on any RNG crate.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// A smooth shaded field with a noisy patch standing in for a crack or pothole.
pub fn damage_image(seed: u64, h: usize, w: usize, patch: (usize, usize, usize, usize)) -> Image {
    let mut g = Lcg(seed);
    let (top, left, ph, pw) = patch;
    let mut planes = Vec::new();
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let base = 0.35 + 0.2 * (y as f64 / h as f64) + 0.05 * c as f64;
                let inside = (top..top + ph).contains(&y) && (left..left + pw).contains(&x);
                planes.push(if inside { g.next() } else { base });
            }
        }
    }
    Image::new(h, w, 3, planes).unwrap()
}

pub fn background_image(seed: u64, h: usize, w: usize, channels: usize) -> Image {
    let phase = seed as f64;
    let data = (0..channels * h * w)
        .map(|i| {
            let (y, x) = ((i / w) % h, i % w);
            0.5 + 0.3 * ((x as f64 * 0.07 + phase).sin() * (y as f64 * 0.05 + phase).cos())
        })
        .collect();
    Image::new(h, w, channels, data).unwrap()
}

pub struct Corpus {
    pub root: PathBuf,
    pub damage: PathBuf,
    pub backgrounds: PathBuf,
}

pub const DAMAGE_NAMES: [&str; 5] = ["KC_pothole_a", "KC_pothole_b", "LF_crack_a", "LF_crack_b", "XB_patch_a"];

/// Five damage images (two KC, two LF, one XB, mixed sizes) and five
/// backgrounds (mixed sizes, gray and RGB).
pub fn write_corpus(root: &Path) -> Corpus {
    let damage = root.join("damage");
    let backgrounds = root.join("backgrounds");
    let sizes = [(48, 40), (41, 37), (40, 56), (33, 45), (50, 50)];
    for (i, (name, &(h, w))) in DAMAGE_NAMES.iter().zip(&sizes).enumerate() {
        let patch = (h / 4 + i, w / 5, h / 3, w / 3);
        save_image(&damage.join(format!("{name}.png")), &damage_image(i as u64 + 1, h, w, patch)).unwrap();
    }
    let bg = [(64, 64, 3), (30, 50, 1), (80, 60, 3), (45, 45, 1), (52, 70, 3)];
    for (i, &(h, w, c)) in bg.iter().enumerate() {
        save_image(&backgrounds.join(format!("road_{i}.png")), &background_image(i as u64, h, w, c)).unwrap();
    }
    Corpus {
        root: root.to_path_buf(),
        damage,
        backgrounds,
    }
}

/// Writes a config file under `corpus.root` with the given output directory
/// name and extra `key = value` lines.
pub fn write_config(corpus: &Corpus, output: &str, extra: &str) -> PathBuf {
    let path = corpus.root.join(format!("{output}.cfg"));
    // the synthetic texture covers a small part of each frame, so the
    // default threshold is lowered unless the caller sets its own
    let threshold = if extra.contains("salience_threshold") {
        ""
    } else {
        "salience_threshold = 0.005\n"
    };
    let text = format!(
        "# fixture run\ndamage_dir = damage\nbackground_dir = backgrounds\noutput_dir = {output}\n{threshold}pairs_per_damage = 5\nseed = 2024\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}
