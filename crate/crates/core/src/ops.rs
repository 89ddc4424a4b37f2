//! Convolution, pooling, activation and resampling over [`Tensor`]s.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Kernel2D, Shape, Tensor};

/// Border handling for [`conv2d`].
///
/// `Zero` and `Reflect` pad "same" style: the effective kernel extent minus one
/// is split between the leading (floor) and trailing (ceil) edge, so a stride
/// of 1 preserves height and width. `Reflect` mirrors about the edge sample
/// without repeating it (`dcb|abcd|cba`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Zero,
    Reflect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

/// Mirror index for reflect-101 borders; handles offsets of any size.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Cross-correlation `out[i] = bias + sum_k in[i * stride + dilation * k - pad] * w[k]`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Kernel2D,
    dilation: usize,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    if dilation == 0 {
        return Err(Error::NonPositive { name: "dilation" });
    }
    if stride == 0 {
        return Err(Error::NonPositive { name: "stride" });
    }
    let s = input.shape();
    if s.c != kernel.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: kernel.in_channels(),
            actual: s.c,
        });
    }
    let (kh, kw) = kernel.kernel_size();
    let eff_h = kh + (kh - 1) * (dilation - 1);
    let eff_w = kw + (kw - 1) * (dilation - 1);
    let (pad_top, pad_left, padded_h, padded_w) = match padding {
        Padding::Valid => (0, 0, s.h, s.w),
        Padding::Zero | Padding::Reflect => ((eff_h - 1) / 2, (eff_w - 1) / 2, s.h + eff_h - 1, s.w + eff_w - 1),
    };
    if eff_h > padded_h || eff_w > padded_w {
        return Err(Error::KernelTooLarge {
            kernel_h: eff_h,
            kernel_w: eff_w,
            input_h: padded_h,
            input_w: padded_w,
        });
    }
    let out_h = (padded_h - eff_h) / stride + 1;
    let out_w = (padded_w - eff_w) / stride + 1;
    let out_shape = Shape::new(s.n, kernel.out_channels(), out_h, out_w);
    let mut out = Vec::with_capacity(out_shape.len());

    // Per output coordinate, the source index of every tap (None = zero pad).
    let taps = |out_len: usize, k: usize, pad: usize, len: usize| -> Vec<Option<usize>> {
        let mut idx = Vec::with_capacity(out_len * k);
        for o in 0..out_len {
            for t in 0..k {
                let pos = (o * stride + t * dilation) as isize - pad as isize;
                idx.push(if (0..len as isize).contains(&pos) {
                    Some(pos as usize)
                } else {
                    match padding {
                        Padding::Reflect => Some(reflect_index(pos, len)),
                        _ => None,
                    }
                });
            }
        }
        idx
    };
    let rows = taps(out_h, kh, pad_top, s.h);
    let cols = taps(out_w, kw, pad_left, s.w);

    for n in 0..s.n {
        for o in 0..kernel.out_channels() {
            let bias = kernel.bias().map_or(0.0, |b| b[o]);
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = bias;
                    for i in 0..s.c {
                        let plane = input.plane(n, i);
                        for ky in 0..kh {
                            let Some(y) = rows[oy * kh + ky] else { continue };
                            for kx in 0..kw {
                                let Some(x) = cols[ox * kw + kx] else { continue };
                                acc += plane[y * s.w + x] * kernel.weight(o, i, ky, kx);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Mean of every (n, c) plane, shaped N x C x 1 x 1.
pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let inv = 1.0 / s.plane_len() as f64;
    let data = (0..s.n)
        .flat_map(|n| (0..s.c).map(move |c| (n, c)))
        .map(|(n, c)| input.plane(n, c).iter().sum::<f64>() * inv)
        .collect();
    Tensor::from_parts(Shape::new(s.n, s.c, 1, 1), data)
}

/// Maximum of every (n, c) plane, shaped N x C x 1 x 1.
pub fn global_max_pool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let data = (0..s.n)
        .flat_map(|n| (0..s.c).map(move |c| (n, c)))
        .map(|(n, c)| input.plane(n, c).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Tensor::from_parts(Shape::new(s.n, s.c, 1, 1), data)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn activate(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Relu => input.map(relu),
    }
}

/// Bilinear resize with half-pixel centres (no corner alignment).
pub fn upsample_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::NonPositive { name: "output size" });
    }
    let s = input.shape();
    let rows = bilinear_taps(s.h, out_h);
    let cols = bilinear_taps(s.w, out_w);
    let out_shape = Shape::new(s.n, s.c, out_h, out_w);
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let p = input.plane(n, c);
            for &(y0, y1, fy) in &rows {
                for &(x0, x1, fx) in &cols {
                    let top = p[y0 * s.w + x0] * (1.0 - fx) + p[y0 * s.w + x1] * fx;
                    let bottom = p[y1 * s.w + x0] * (1.0 - fx) + p[y1 * s.w + x1] * fx;
                    out.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// (lower index, upper index, upper weight) per output coordinate.
pub(crate) fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    let mut taps = vec![(0, 0, 0.0); out_len];
    for (o, tap) in taps.iter_mut().enumerate() {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (libm::floor(src) as usize).min(in_len - 1);
        let i1 = (i0 + 1).min(in_len - 1);
        *tap = (i0, i1, src - i0 as f64);
    }
    taps
}
