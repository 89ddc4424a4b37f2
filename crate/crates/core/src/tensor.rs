//! Dense tensors, images, convolution kernels and binary masks.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Dimensions of a rank-4 tensor in (batch, channel, row, column) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane_len(&self) -> usize {
        self.h * self.w
    }

    fn validate(self) -> Result<Self> {
        if self.is_empty() {
            return Err(Error::EmptyShape(self));
        }
        Ok(self)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Row-major `f64` tensor laid out by (n, c, h, w).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let shape = shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                shape,
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    /// Builds a tensor by calling `f(n, c, h, w)` for every element.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    /// Internal constructor for results of operations that already uphold the invariants.
    pub(crate) fn from_parts(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    /// The `h * w` values of one (n, c) plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.shape.plane_len();
        let start = (n * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor::from_parts(self.shape, data))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        Ok(self
            .zip_with(other, |a, b| libm::fabs(a - b))?
            .data
            .iter()
            .fold(0.0, |m, &v| if v > m { v } else { m }))
    }

    /// Concatenates tensors with equal N, H, W along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::Empty("concatenation input"))?.shape;
        let mut channels = 0;
        for part in parts {
            let s = part.shape;
            if s.n != first.n || s.h != first.h || s.w != first.w {
                return Err(Error::ShapeMismatch { left: first, right: s });
            }
            channels += s.c;
        }
        let shape = Shape::new(first.n, channels, first.h, first.w);
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..first.n {
            for part in parts {
                for c in 0..part.shape.c {
                    data.extend_from_slice(part.plane(n, c));
                }
            }
        }
        Ok(Tensor::from_parts(shape, data))
    }

    /// Selects a subset of channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Tensor> {
        let shape = Shape::new(self.shape.n, channels.len(), self.shape.h, self.shape.w);
        let shape = shape.validate()?;
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..self.shape.n {
            for &c in channels {
                if c >= self.shape.c {
                    return Err(Error::ChannelMismatch {
                        expected: self.shape.c,
                        actual: c + 1,
                    });
                }
                data.extend_from_slice(self.plane(n, c));
            }
        }
        Ok(Tensor::from_parts(shape, data))
    }
}

/// Multi-channel image stored plane by plane (channel-major).
///
/// Values loaded from disk sit in `[0, 1]`; intermediate results such as
/// Laplacian detail levels may leave that range, so the constructor only
/// requires finiteness. [`Image::clamped`] restores the range before output.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedChannels(channels));
        }
        let shape = Shape::new(1, channels, height, width).validate()?;
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                shape,
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Single-channel image from `f(row, col)`.
    pub fn gray_from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, 1, data)
    }

    /// Interleaved (HWC) samples, as produced by most image decoders.
    pub fn from_interleaved(height: usize, width: usize, channels: usize, samples: &[f64]) -> Result<Self> {
        if samples.len() != height * width * channels {
            let shape = Shape::new(1, channels, height, width);
            return Err(Error::DataLength {
                shape,
                expected: shape.len(),
                actual: samples.len(),
            });
        }
        let mut data = vec![0.0; samples.len()];
        let plane = height * width;
        for (i, px) in samples.chunks_exact(channels.max(1)).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * plane + i] = v;
            }
        }
        Self::new(height, width, channels, data)
    }

    pub(crate) fn from_planes(height: usize, width: usize, planes: Vec<Vec<f64>>) -> Self {
        let channels = planes.len();
        let data: Vec<f64> = planes.into_iter().flatten().collect();
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let len = self.height * self.width;
        &self.data[channel * len..(channel + 1) * len]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.height * self.width)
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    /// Samples in interleaved (HWC) order.
    pub fn to_interleaved(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..plane {
            for c in 0..self.channels {
                out.push(self.data[c * plane + i]);
            }
        }
        out
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// ITU-R BT.601 luma; gray images are returned unchanged.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect();
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Replicates a gray plane into three channels; RGB is returned unchanged.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    pub fn transpose(&self) -> Image {
        let planes = self
            .planes()
            .map(|p| {
                let mut t = vec![0.0; p.len()];
                for y in 0..self.height {
                    for x in 0..self.width {
                        t[x * self.height + y] = p[y * self.width + x];
                    }
                }
                t
            })
            .collect();
        Image::from_planes(self.width, self.height, planes)
    }

    pub fn max_abs_diff(&self, other: &Image) -> Option<f64> {
        if !self.same_dims(other) {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| libm::fabs(a - b))
                .fold(0.0, f64::max),
        )
    }

    /// 1 x C x H x W view of the image.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            Shape::new(1, self.channels, self.height, self.width),
            self.data.clone(),
        )
    }

    /// Takes batch entry `n` of a tensor with 1 or 3 channels.
    pub fn from_tensor(tensor: &Tensor, n: usize) -> Result<Image> {
        let s = tensor.shape();
        if n >= s.n {
            return Err(Error::OutOfRange {
                name: "batch index",
                value: n as f64,
                range: "[0, N)",
            });
        }
        let planes = (0..s.c).map(|c| tensor.plane(n, c).to_vec()).collect::<Vec<_>>();
        let data = planes.concat();
        Image::new(s.h, s.w, s.c, data)
    }
}

/// Convolution weights laid out (out, in, kh, kw), with optional per-output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    out_channels: usize,
    in_channels: usize,
    kh: usize,
    kw: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl Kernel2D {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        let shape = Shape::new(out_channels, in_channels, kh, kw).validate()?;
        if weights.len() != shape.len() {
            return Err(Error::DataLength {
                shape,
                expected: shape.len(),
                actual: weights.len(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(Error::ChannelMismatch {
                    expected: out_channels,
                    actual: b.len(),
                });
            }
        }
        if weights.iter().chain(bias.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel weights"));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kh,
            kw,
            weights,
            bias,
        })
    }

    /// Builds weights from `f(out, in, ky, kx)` and an optional bias from `bias(out)`.
    pub fn from_fn(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
        bias: Option<&mut dyn FnMut(usize) -> f64>,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(out_channels * in_channels * kh * kw);
        for o in 0..out_channels {
            for i in 0..in_channels {
                for y in 0..kh {
                    for x in 0..kw {
                        weights.push(f(o, i, y, x));
                    }
                }
            }
        }
        let bias = bias.map(|b| (0..out_channels).map(b).collect());
        Self::new(out_channels, in_channels, kh, kw, weights, bias)
    }

    /// Single 2-D stencil given as rows, one input and one output channel, no bias.
    pub fn from_rows<const K: usize>(rows: [[f64; K]; K]) -> Self {
        let weights = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(1, 1, K, K, weights, None).expect("stencil rows are finite and non-empty")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kh, self.kw)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, y: usize, x: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kh + y) * self.kw + x]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn transpose(&self) -> Kernel2D {
        Kernel2D::from_fn(
            self.out_channels,
            self.in_channels,
            self.kw,
            self.kh,
            |o, i, y, x| self.weight(o, i, x, y),
            None,
        )
        .map(|mut k| {
            k.bias = self.bias.clone();
            k
        })
        .expect("transpose preserves validity")
    }

    /// Equivalent dilation-1 kernel with `rate - 1` zeros inserted between taps.
    pub fn zero_inflate(&self, rate: usize) -> Kernel2D {
        let rate = rate.max(1);
        let kh = self.kh + (self.kh - 1) * (rate - 1);
        let kw = self.kw + (self.kw - 1) * (rate - 1);
        let mut k = Kernel2D::from_fn(
            self.out_channels,
            self.in_channels,
            kh,
            kw,
            |o, i, y, x| {
                if y % rate == 0 && x % rate == 0 {
                    self.weight(o, i, y / rate, x / rate)
                } else {
                    0.0
                }
            },
            None,
        )
        .expect("inflation preserves validity");
        k.bias = self.bias.clone();
        k
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl PixelRect {
    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        let shape = Shape::new(1, 1, height, width).validate()?;
        if bits.len() != shape.len() {
            return Err(Error::DataLength {
                shape,
                expected: shape.len(),
                actual: bits.len(),
            });
        }
        Ok(Self { height, width, bits })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tightest rectangle around the set pixels; `None` when the mask is empty.
    pub fn bounding_rect(&self) -> Option<PixelRect> {
        let mut rect: Option<PixelRect> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(y, x) {
                    continue;
                }
                rect = Some(match rect {
                    None => PixelRect {
                        top: y,
                        left: x,
                        bottom: y,
                        right: x,
                    },
                    Some(r) => PixelRect {
                        top: r.top.min(y),
                        left: r.left.min(x),
                        bottom: r.bottom.max(y),
                        right: r.right.max(x),
                    },
                });
            }
        }
        rect
    }
}
