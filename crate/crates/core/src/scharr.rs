//! Four-direction Scharr gradients, salience scoring and feature masks.
//!
//! The classic Scharr pair only looks at 0° and 90°. Here the same
//! `{3, 10}` stencil is also rotated onto both diagonals, so a gradient field
//! carries four signed responses and their L2 magnitude.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{conv2d, Padding};
use crate::tensor::{BinaryMask, Image, Kernel2D, PixelRect};

/// Mean magnitude is divided by this, so scores are comparable across images.
pub const SALIENCE_NORM: f64 = 52.0 * core::f64::consts::SQRT_2;

pub const DEFAULT_SALIENCE_THRESHOLD: f64 = 0.05;

pub const DEFAULT_MASK_QUANTILE: f64 = 0.90;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Deg0, Direction::Deg45, Direction::Deg90, Direction::Deg135];

    pub fn kernel(self) -> Kernel2D {
        match self {
            Direction::Deg0 => Kernel2D::from_rows([[-3.0, 0.0, 3.0], [-10.0, 0.0, 10.0], [-3.0, 0.0, 3.0]]),
            Direction::Deg45 => Kernel2D::from_rows([[0.0, 3.0, 10.0], [-3.0, 0.0, 3.0], [-10.0, -3.0, 0.0]]),
            Direction::Deg90 => Kernel2D::from_rows([[-3.0, -10.0, -3.0], [0.0, 0.0, 0.0], [3.0, 10.0, 3.0]]),
            Direction::Deg135 => Kernel2D::from_rows([[-10.0, -3.0, 0.0], [-3.0, 0.0, 3.0], [0.0, 3.0, 10.0]]),
        }
    }
}

/// Kernels for 0°, 45°, 90° and 135°, in that order.
pub fn scharr_kernels() -> [Kernel2D; 4] {
    Direction::ALL.map(Direction::kernel)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    height: usize,
    width: usize,
    pub g0: Vec<f64>,
    pub g45: Vec<f64>,
    pub g90: Vec<f64>,
    pub g135: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl GradientField {
    /// Assembles a field from directional planes; the magnitude is derived.
    pub fn from_directions(
        height: usize,
        width: usize,
        g0: Vec<f64>,
        g45: Vec<f64>,
        g90: Vec<f64>,
        g135: Vec<f64>,
    ) -> Result<Self> {
        let len = height * width;
        if len == 0 {
            return Err(Error::Empty("gradient field"));
        }
        for plane in [&g0, &g45, &g90, &g135] {
            if plane.len() != len {
                return Err(Error::Params(alloc::format!(
                    "gradient plane has {} values, field is {height}x{width}",
                    plane.len()
                )));
            }
        }
        let magnitude = (0..len)
            .map(|i| libm::sqrt(g0[i] * g0[i] + g45[i] * g45[i] + g90[i] * g90[i] + g135[i] * g135[i]))
            .collect();
        Ok(Self {
            height,
            width,
            g0,
            g45,
            g90,
            g135,
            magnitude,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn direction(&self, d: Direction) -> &[f64] {
        match d {
            Direction::Deg0 => &self.g0,
            Direction::Deg45 => &self.g45,
            Direction::Deg90 => &self.g90,
            Direction::Deg135 => &self.g135,
        }
    }
}

/// Directional responses of a single-channel image, reflect-padded.
pub fn compute_gradients(image: &Image) -> Result<GradientField> {
    if image.channels() != 1 {
        return Err(Error::NotGrayscale);
    }
    if image.height() < 3 || image.width() < 3 {
        return Err(Error::ImageTooSmall {
            height: image.height(),
            width: image.width(),
            min: 3,
        });
    }
    let input = image.to_tensor();
    let [g0, g45, g90, g135] = scharr_kernels().map(|k| {
        conv2d(&input, &k, 1, 1, Padding::Reflect)
            .expect("3x3 single-channel kernel fits a reflect-padded image")
            .into_data()
    });
    GradientField::from_directions(image.height(), image.width(), g0, g45, g90, g135)
}

pub fn salience_score(field: &GradientField) -> f64 {
    let mean = field.magnitude.iter().sum::<f64>() / field.magnitude.len() as f64;
    mean / SALIENCE_NORM
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SalienceReport {
    pub score: f64,
    pub passed: bool,
    pub threshold: f64,
}

pub fn assess_salience(field: &GradientField, threshold: f64) -> SalienceReport {
    let score = salience_score(field);
    SalienceReport {
        score,
        passed: score >= threshold,
        threshold,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMask {
    pub mask: BinaryMask,
    /// `None` when the magnitude plane is identically zero (no features).
    pub bounds: Option<PixelRect>,
    /// The magnitude level a pixel had to reach to be selected.
    pub cutoff: f64,
}

impl FeatureMask {
    pub fn has_features(&self) -> bool {
        self.bounds.is_some()
    }
}

/// Linear-interpolated quantile (the "type 7" estimator) of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Selects pixels whose magnitude reaches the `quantile`-th magnitude level.
pub fn extract_feature_mask(field: &GradientField, quantile_level: f64) -> Result<FeatureMask> {
    if !(quantile_level > 0.0 && quantile_level < 1.0) {
        return Err(Error::OutOfRange {
            name: "quantile",
            value: quantile_level,
            range: "(0, 1)",
        });
    }
    let (h, w) = (field.height, field.width);
    if field.magnitude.iter().all(|&m| m == 0.0) {
        return Ok(FeatureMask {
            mask: BinaryMask::filled(h, w, false)?,
            bounds: None,
            cutoff: 0.0,
        });
    }
    let cutoff = quantile(&field.magnitude, quantile_level);
    let bits = field.magnitude.iter().map(|&m| m >= cutoff).collect();
    let mask = BinaryMask::new(h, w, bits)?;
    let bounds = mask.bounding_rect();
    Ok(FeatureMask { mask, bounds, cutoff })
}
