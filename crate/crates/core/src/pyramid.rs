//! Gaussian and Laplacian pyramids and multiband fusion.
//!
//! `pyr_down` blurs with the 5-tap binomial `[1, 4, 6, 4, 1] / 16` in both
//! axes and keeps even rows and columns. `pyr_up` zero-interleaves to an
//! explicit target size and blurs with the same kernel scaled by 4, so odd
//! dimensions round-trip. Borders are reflect-101 throughout.
//!
//! A [`LaplacianPyramid`] stores `L_i = G_i - pyr_up(G_{i+1})` plus the
//! coarsest Gaussian level; collapsing it reverses the construction exactly
//! up to float rounding.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::reflect_index;
use crate::tensor::{BinaryMask, Image};

pub const BINOMIAL_5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

pub const DEFAULT_LEVELS: usize = 4;

pub const DEFAULT_FEATHER_SIGMA: f64 = 2.0;

/// Separable correlation of an `h x w` plane with a centred odd-length kernel.
pub(crate) fn blur_plane(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect_index(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[reflect_index(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub(crate) fn down_plane(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let blurred = blur_plane(plane, h, w, &BINOMIAL_5);
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            out.push(blurred[2 * y * w + 2 * x]);
        }
    }
    out
}

pub(crate) fn up_plane(plane: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let mut stuffed = vec![0.0; th * tw];
    for y in 0..h {
        for x in 0..w {
            stuffed[2 * y * tw + 2 * x] = plane[y * w + x];
        }
    }
    let kernel = BINOMIAL_5.map(|v| 2.0 * v);
    blur_plane(&stuffed, th, tw, &kernel)
}

fn halved(n: usize) -> usize {
    n.div_ceil(2)
}

/// Blur then drop odd rows and columns: `ceil(h/2) x ceil(w/2)`.
pub fn pyr_down(image: &Image) -> Result<Image> {
    let (h, w) = (image.height(), image.width());
    if h < 2 || w < 2 {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min: 2,
        });
    }
    let planes = image.planes().map(|p| down_plane(p, h, w)).collect();
    Ok(Image::from_planes(halved(h), halved(w), planes))
}

/// Zero-interleave to `target_h x target_w`, then blur with 4x the binomial kernel.
pub fn pyr_up(image: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    let (h, w) = (image.height(), image.width());
    let fits = |n: usize, t: usize| t == 2 * n || t + 1 == 2 * n;
    if !fits(h, target_h) || !fits(w, target_w) {
        return Err(Error::UpsampleTarget {
            from_h: h,
            from_w: w,
            to_h: target_h,
            to_w: target_w,
        });
    }
    let planes = image.planes().map(|p| up_plane(p, h, w, target_h, target_w)).collect();
    Ok(Image::from_planes(target_h, target_w, planes))
}

fn check_levels(height: usize, width: usize, levels: usize) -> Result<()> {
    if levels < 2 {
        return Err(Error::TooFewLevels(levels));
    }
    let (mut h, mut w) = (height, width);
    for _ in 1..levels {
        h = halved(h);
        w = halved(w);
    }
    // halving is monotone, so a coarsest level of at least 2x2 covers every step
    if h < 2 || w < 2 || height < 2 || width < 2 {
        return Err(Error::TooManyLevels { levels, height, width });
    }
    Ok(())
}

/// Largest level count whose coarsest level is still at least 2x2.
pub fn max_levels(height: usize, width: usize) -> usize {
    let (mut h, mut w, mut n) = (height, width, 1);
    while h >= 3 && w >= 3 {
        h = halved(h);
        w = halved(w);
        n += 1;
    }
    n
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPyramid {
    levels: Vec<Image>,
}

impl GaussianPyramid {
    pub fn build(image: &Image, levels: usize) -> Result<Self> {
        check_levels(image.height(), image.width(), levels)?;
        let mut out = Vec::with_capacity(levels);
        out.push(image.clone());
        for i in 1..levels {
            let next = pyr_down(&out[i - 1])?;
            out.push(next);
        }
        Ok(Self { levels: out })
    }

    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPyramid {
    details: Vec<Image>,
    top: Image,
}

impl LaplacianPyramid {
    pub fn from_gaussian(gaussian: &GaussianPyramid) -> Result<Self> {
        let g = gaussian.levels();
        let mut details = Vec::with_capacity(g.len() - 1);
        for pair in g.windows(2) {
            let (fine, coarse) = (&pair[0], &pair[1]);
            let up = pyr_up(coarse, fine.height(), fine.width())?;
            let data = fine.data().iter().zip(up.data()).map(|(a, b)| a - b).collect();
            details.push(Image::new(fine.height(), fine.width(), fine.channels(), data)?);
        }
        Ok(Self {
            details,
            top: g[g.len() - 1].clone(),
        })
    }

    /// Detail levels `L_0 .. L_{n-2}`, finest first.
    pub fn details(&self) -> &[Image] {
        &self.details
    }

    /// Coarsest Gaussian level, stored verbatim.
    pub fn top(&self) -> &Image {
        &self.top
    }

    /// Total level count, details plus top.
    pub fn levels(&self) -> usize {
        self.details.len() + 1
    }

    /// Rebuild the finest image: from the top down, `G_i = L_i + pyr_up(G_{i+1})`.
    pub fn collapse(&self) -> Image {
        let mut current = self.top.clone();
        for detail in self.details.iter().rev() {
            let up = pyr_up(&current, detail.height(), detail.width()).expect("pyramid levels are congruent");
            let data = detail.data().iter().zip(up.data()).map(|(l, u)| l + u).collect();
            current = Image::new(detail.height(), detail.width(), detail.channels(), data)
                .expect("sum of finite levels is finite");
        }
        current
    }

    fn congruent(&self, other: &Self) -> bool {
        self.details.len() == other.details.len()
            && self.top.same_dims(&other.top)
            && self.details.iter().zip(&other.details).all(|(a, b)| a.same_dims(b))
    }
}

pub fn build_laplacian(image: &Image, levels: usize) -> Result<LaplacianPyramid> {
    LaplacianPyramid::from_gaussian(&GaussianPyramid::build(image, levels)?)
}

/// Per-pixel weight of image A in a blend; B receives `1 - w`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl WeightMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height * width == 0 {
            return Err(Error::Empty("weight map"));
        }
        if values.len() != height * width {
            return Err(Error::Params(alloc::format!(
                "weight map has {} values for {height}x{width}",
                values.len()
            )));
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange {
                name: "weight",
                value: bad,
                range: "[0, 1]",
            });
        }
        Ok(Self { height, width, values })
    }

    pub fn uniform(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The weight map of B, `1 - w`.
    pub fn complement(&self) -> WeightMap {
        WeightMap {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    fn as_image(&self) -> Image {
        Image::new(self.height, self.width, 1, self.values.clone()).expect("weights are finite")
    }
}

/// Normalised 1-D Gaussian truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| libm::exp(-((x * x) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Feathered weights: the 0/1 mask blurred by a truncated Gaussian.
pub fn make_weight_map(mask: &BinaryMask, feather_sigma: f64) -> Result<WeightMap> {
    if !feather_sigma.is_finite() || feather_sigma < 0.0 {
        return Err(Error::OutOfRange {
            name: "feather_sigma",
            value: feather_sigma,
            range: "[0, inf)",
        });
    }
    let (h, w) = (mask.height(), mask.width());
    let plane: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let values = if feather_sigma == 0.0 {
        plane
    } else {
        blur_plane(&plane, h, w, &gaussian_kernel(feather_sigma))
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    };
    WeightMap::new(h, w, values)
}

/// Per-level blend `wA_i * lpA_i + (1 - wA_i) * lpB_i`, with `wA_i` the
/// i-th level of the weight map's own Gaussian pyramid.
pub fn blend(lp_a: &LaplacianPyramid, lp_b: &LaplacianPyramid, weight_a: &WeightMap) -> Result<LaplacianPyramid> {
    let base = lp_a.details.first().unwrap_or(&lp_a.top);
    if !lp_a.congruent(lp_b) {
        let other = lp_b.details.first().unwrap_or(&lp_b.top);
        return Err(Error::Params(alloc::format!(
            "pyramids differ: {} levels at {}x{}x{} vs {} levels at {}x{}x{}",
            lp_a.levels(),
            base.height(),
            base.width(),
            base.channels(),
            lp_b.levels(),
            other.height(),
            other.width(),
            other.channels()
        )));
    }
    if weight_a.height != base.height() || weight_a.width != base.width() {
        return Err(Error::Params(alloc::format!(
            "weight map is {}x{} but images are {}x{}",
            weight_a.height,
            weight_a.width,
            base.height(),
            base.width()
        )));
    }
    let weights = GaussianPyramid::build(&weight_a.as_image(), lp_a.levels())?;
    let mix = |a: &Image, b: &Image, w: &Image| -> Image {
        let wv = w.plane(0);
        let planes = a
            .planes()
            .zip(b.planes())
            .map(|(pa, pb)| {
                pa.iter()
                    .zip(pb)
                    .zip(wv)
                    .map(|((&x, &y), &k)| k * x + (1.0 - k) * y)
                    .collect()
            })
            .collect();
        Image::from_planes(a.height(), a.width(), planes)
    };
    let wl = weights.levels();
    let details = lp_a
        .details
        .iter()
        .zip(&lp_b.details)
        .zip(wl)
        .map(|((a, b), w)| mix(a, b, w))
        .collect();
    let top = mix(&lp_a.top, &lp_b.top, &wl[wl.len() - 1]);
    Ok(LaplacianPyramid { details, top })
}

/// Multiband fusion of A onto B, collapsed and clamped to `[0, 1]`.
pub fn fuse(lp_a: &LaplacianPyramid, lp_b: &LaplacianPyramid, weight_a: &WeightMap) -> Result<Image> {
    Ok(blend(lp_a, lp_b, weight_a)?.collapse().clamped())
}
