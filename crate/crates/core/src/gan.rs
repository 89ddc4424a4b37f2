//! CycleGAN objective terms over finite batches.
//!
//! Expectations become batch means. Discriminator scores are clamped to
//! `[LOG_EPS, 1 - LOG_EPS]` before taking natural logs.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOG_EPS: f64 = 1e-7;

pub const DEFAULT_LAMBDA_CYC: f64 = 10.0;

/// Discriminator outputs on real and on generated samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreBatch {
    real: Vec<f64>,
    fake: Vec<f64>,
}

impl ScoreBatch {
    /// Scores must lie in `[0, 1]`; both lists must be non-empty.
    pub fn new(real: Vec<f64>, fake: Vec<f64>) -> Result<Self> {
        if real.is_empty() {
            return Err(Error::Empty("real scores"));
        }
        if fake.is_empty() {
            return Err(Error::Empty("fake scores"));
        }
        for &s in real.iter().chain(&fake) {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::OutOfRange {
                    name: "discriminator score",
                    value: s,
                    range: "[0, 1]",
                });
            }
        }
        let clamp = |v: Vec<f64>| v.into_iter().map(|s| s.clamp(LOG_EPS, 1.0 - LOG_EPS)).collect();
        Ok(Self {
            real: clamp(real),
            fake: clamp(fake),
        })
    }

    pub fn real(&self) -> &[f64] {
        &self.real
    }

    pub fn fake(&self) -> &[f64] {
        &self.fake
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// `mean(ln D(real)) + mean(ln(1 - D(fake)))`.
///
/// The same function serves both mappings; for `F: Y -> X` pass `D_X`'s
/// scores on X samples as real and on `F(y)` as fake.
pub fn adversarial_loss(batch: &ScoreBatch) -> f64 {
    mean(batch.real.iter().map(|&s| libm::log(s))) + mean(batch.fake.iter().map(|&s| libm::log(1.0 - s)))
}

/// A sample and its round trip through both generators.
#[derive(Clone, Copy, Debug)]
pub struct CyclePair<'a> {
    original: &'a Tensor,
    reconstructed: &'a Tensor,
}

impl<'a> CyclePair<'a> {
    pub fn new(original: &'a Tensor, reconstructed: &'a Tensor) -> Result<Self> {
        if original.shape() != reconstructed.shape() {
            return Err(Error::ShapeMismatch {
                left: original.shape(),
                right: reconstructed.shape(),
            });
        }
        Ok(Self {
            original,
            reconstructed,
        })
    }

    /// Per-element mean absolute difference.
    pub fn mean_l1(&self) -> f64 {
        let a = self.original.data();
        let b = self.reconstructed.data();
        a.iter().zip(b).map(|(x, y)| libm::fabs(x - y)).sum::<f64>() / a.len() as f64
    }
}

/// `mean|F(G(x)) - x| + mean|G(F(y)) - y|`.
pub fn cycle_consistency_loss(forward: &CyclePair<'_>, backward: &CyclePair<'_>) -> f64 {
    forward.mean_l1() + backward.mean_l1()
}

/// `adv_a + adv_b + lambda_cyc * cyc`; `lambda_cyc` must be non-negative.
pub fn total_cyclegan_objective(adv_a: f64, adv_b: f64, cyc: f64, lambda_cyc: f64) -> Result<f64> {
    if lambda_cyc.is_nan() || lambda_cyc < 0.0 {
        return Err(Error::OutOfRange {
            name: "lambda_cyc",
            value: lambda_cyc,
            range: "[0, inf)",
        });
    }
    Ok(adv_a + adv_b + lambda_cyc * cyc)
}
