//! Stratified train/test/val split.
//!
//! Within each class the items are shuffled with the seeded generator and
//! divided by largest-remainder apportionment: every part gets
//! `floor(n * ratio)`, and the items left over go one each to the parts with
//! the largest fractional remainders (ties to the earlier part).

use std::path::Path;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::formats::{DamageClass, Manifest, Ratios, Split};

/// Classes with fewer items than this go entirely to train.
pub const MIN_CLASS_ITEMS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitWarning {
    SmallClass { class: DamageClass, items: usize },
}

impl std::fmt::Display for SplitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitWarning::SmallClass { class, items } => {
                write!(f, "class {class} has only {items} item(s); all assigned to train")
            }
        }
    }
}

/// Part sizes for `n` items, summing to `n`.
pub fn apportion(n: usize, ratios: &Ratios) -> [usize; 3] {
    let quotas = ratios.as_array().map(|r| n as f64 * r);
    // the epsilon keeps 0.1 * 10 = 0.9999... from losing a whole item
    let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Split label for every entry of `classes`, deterministic in `seed`.
pub fn assign_splits(classes: &[DamageClass], ratios: &Ratios, seed: u64) -> (Vec<Split>, Vec<SplitWarning>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Train; classes.len()];
    let mut warnings = Vec::new();
    for class in DamageClass::ALL {
        let mut members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < MIN_CLASS_ITEMS {
            warnings.push(SplitWarning::SmallClass {
                class,
                items: members.len(),
            });
            continue;
        }
        members.shuffle(&mut rng);
        let [train, test, _] = apportion(members.len(), ratios);
        for (k, &i) in members.iter().enumerate() {
            out[i] = if k < train {
                Split::Train
            } else if k < train + test {
                Split::Test
            } else {
                Split::Val
            };
        }
    }
    (out, warnings)
}

/// Sets the split column of every record.
pub fn split_dataset(manifest: &mut Manifest, ratios: &Ratios, seed: u64) -> Vec<SplitWarning> {
    let classes: Vec<DamageClass> = manifest.records.iter().map(|r| r.class).collect();
    let (splits, warnings) = assign_splits(&classes, ratios, seed);
    for (r, s) in manifest.records.iter_mut().zip(splits) {
        r.split = Some(s);
    }
    warnings
}

fn file_name(rel: &str) -> &str {
    rel.rsplit('/').next().unwrap_or(rel)
}

/// Moves each record's image and label into `{split}/images` and
/// `{split}/labels` under `root`, rewriting the record paths.
pub fn materialize(root: &Path, manifest: &mut Manifest) -> Result<()> {
    for split in Split::ALL {
        for sub in ["images", "labels"] {
            let dir = root.join(split.name()).join(sub);
            std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    for r in &mut manifest.records {
        let split = r.split.unwrap_or(Split::Train);
        let image = format!("{}/images/{}", split.name(), file_name(&r.image));
        let label = format!("{}/labels/{}", split.name(), file_name(&r.label_file));
        for (from, to) in [(&r.image, &image), (&r.label_file, &label)] {
            if from != to {
                let (src, dst) = (root.join(from), root.join(to));
                std::fs::rename(&src, &dst)
                    .with_context(|| format!("cannot move {} to {}", src.display(), dst.display()))?;
            }
        }
        r.image = image;
        r.label_file = label;
    }
    Ok(())
}
