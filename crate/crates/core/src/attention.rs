//! Forward passes for CBAM, squeeze-and-excitation, ASPP and AS-SE.
//!
//! Fully connected layers and ASPP convolutions carry biases; there is no
//! batch normalisation. Every spatial convolution uses zero "same" padding.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{conv2d, global_avg_pool, global_max_pool, relu, sigmoid, upsample_bilinear, Padding};
use crate::tensor::{Kernel2D, Shape, Tensor};

pub const DEFAULT_REDUCTION: usize = 16;

/// Dilation rates of the four convolution branches, 1x1 first.
pub const ASPP_RATES: [usize; 4] = [1, 6, 12, 18];

pub const SPATIAL_KERNEL: usize = 7;

/// Dense layer `y = W x + b` with `W` stored (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::Params(format!("linear layer {in_features} -> {out_features}")));
        }
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::Params(format!(
                "linear {in_features} -> {out_features} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear parameters"));
        }
        Ok(Self {
            in_features,
            out_features,
            weight,
            bias,
        })
    }

    /// Weights from `f(out, in)`, biases from `b(out)`.
    pub fn from_fn(
        in_features: usize,
        out_features: usize,
        mut f: impl FnMut(usize, usize) -> f64,
        mut b: impl FnMut(usize) -> f64,
    ) -> Result<Self> {
        let mut weight = Vec::with_capacity(in_features * out_features);
        for o in 0..out_features {
            for i in 0..in_features {
                weight.push(f(o, i));
            }
        }
        let bias = (0..out_features).map(&mut b).collect();
        Self::new(in_features, out_features, weight, bias)
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Result<Self> {
        Self::from_fn(in_features, out_features, |_, _| 0.0, |_| 0.0)
    }

    /// Square identity with zero bias.
    pub fn identity(features: usize) -> Result<Self> {
        Self::from_fn(features, features, |o, i| if o == i { 1.0 } else { 0.0 }, |_| 0.0)
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weight[out * self.in_features + input]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_features);
        self.weight
            .chunks_exact(self.in_features)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// Two-layer bottleneck `fc2(relu(fc1(x)))` shared by CBAM and SE.
#[derive(Clone, Debug, PartialEq)]
pub struct Bottleneck {
    fc1: Linear,
    fc2: Linear,
}

impl Bottleneck {
    pub fn new(fc1: Linear, fc2: Linear) -> Result<Self> {
        if fc1.out_features != fc2.in_features || fc2.out_features != fc1.in_features {
            return Err(Error::Params(format!(
                "bottleneck {} -> {} -> {} must return to its input width",
                fc1.in_features, fc1.out_features, fc2.out_features
            )));
        }
        let channels = fc1.in_features;
        let hidden = fc1.out_features;
        if !channels.is_multiple_of(hidden) {
            return Err(Error::Reduction {
                channels,
                reduction: channels / hidden.max(1),
            });
        }
        Ok(Self { fc1, fc2 })
    }

    /// Builds a `channels -> channels / reduction -> channels` bottleneck from
    /// a value source, filled in fc1 weights, fc1 bias, fc2 weights, fc2 bias order.
    pub fn generate(channels: usize, reduction: usize, mut value: impl FnMut() -> f64) -> Result<Self> {
        let hidden = hidden_width(channels, reduction)?;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| value()).collect() };
        let fc1 = Linear::new(channels, hidden, draw(channels * hidden), draw(hidden))?;
        let fc2 = Linear::new(hidden, channels, draw(hidden * channels), draw(channels))?;
        Self::new(fc1, fc2)
    }

    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        Self::generate(channels, reduction, || 0.0)
    }

    pub fn fc1(&self) -> &Linear {
        &self.fc1
    }

    pub fn fc2(&self) -> &Linear {
        &self.fc2
    }

    pub fn channels(&self) -> usize {
        self.fc1.in_features
    }

    pub fn reduction(&self) -> usize {
        self.fc1.in_features / self.fc1.out_features
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self.fc1.forward(x).into_iter().map(relu).collect();
        self.fc2.forward(&hidden)
    }
}

pub(crate) fn hidden_width(channels: usize, reduction: usize) -> Result<usize> {
    if channels == 0 {
        return Err(Error::NonPositive { name: "channels" });
    }
    if reduction == 0 || !channels.is_multiple_of(reduction) {
        return Err(Error::Reduction { channels, reduction });
    }
    Ok(channels / reduction)
}

/// Shared MLP of the channel-attention branch.
pub type ChannelAttentionParams = Bottleneck;

/// Squeeze (`W_r`) and excitation (`W_s`) layers of an SE block.
pub type SeParams = Bottleneck;

/// The 7x7, 2 -> 1 convolution of spatial attention. Input channel 0 is the
/// channel-mean map, channel 1 the channel-max map.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAttentionParams {
    kernel: Kernel2D,
}

impl SpatialAttentionParams {
    pub fn new(kernel: Kernel2D) -> Result<Self> {
        let ok = kernel.out_channels() == 1
            && kernel.in_channels() == 2
            && kernel.kernel_size() == (SPATIAL_KERNEL, SPATIAL_KERNEL);
        if !ok {
            let (kh, kw) = kernel.kernel_size();
            return Err(Error::Params(format!(
                "spatial attention needs a 1x2x7x7 kernel, got {}x{}x{kh}x{kw}",
                kernel.out_channels(),
                kernel.in_channels()
            )));
        }
        let kernel = if kernel.bias().is_some() {
            kernel
        } else {
            let w = kernel.weights().to_vec();
            Kernel2D::new(1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL, w, Some(alloc::vec![0.0]))?
        };
        Ok(Self { kernel })
    }

    /// Weights in (in, ky, kx) order, then the bias.
    pub fn generate(mut value: impl FnMut() -> f64) -> Result<Self> {
        let weights: Vec<f64> = (0..2 * SPATIAL_KERNEL * SPATIAL_KERNEL).map(|_| value()).collect();
        let bias = alloc::vec![value()];
        Self::new(Kernel2D::new(1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL, weights, Some(bias))?)
    }

    pub fn zeros() -> Self {
        Self::generate(|| 0.0).expect("zero kernel is valid")
    }

    pub fn kernel(&self) -> &Kernel2D {
        &self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.kernel.param_count()
    }
}

/// Five ASPP branches plus the 1x1 projection over their concatenation.
#[derive(Clone, Debug, PartialEq)]
pub struct AsppParams {
    /// 1x1 at rate 1, then 3x3 at rates 6, 12, 18.
    branches: [Kernel2D; 4],
    /// 1x1 applied to the globally pooled input.
    image_pool: Kernel2D,
    projection: Kernel2D,
}

impl AsppParams {
    pub fn new(branches: [Kernel2D; 4], image_pool: Kernel2D, projection: Kernel2D) -> Result<Self> {
        let in_c = image_pool.in_channels();
        let width = image_pool.out_channels();
        if image_pool.kernel_size() != (1, 1) {
            return Err(Error::Params("image-pool branch must be 1x1".into()));
        }
        for (i, b) in branches.iter().enumerate() {
            let want = if i == 0 { (1, 1) } else { (3, 3) };
            if b.kernel_size() != want {
                return Err(Error::Params(format!(
                    "branch at rate {} must be {}x{}",
                    ASPP_RATES[i], want.0, want.1
                )));
            }
            if b.in_channels() != in_c || b.out_channels() != width {
                return Err(Error::Params(format!(
                    "branch at rate {} maps {} -> {}, expected {in_c} -> {width}",
                    ASPP_RATES[i],
                    b.in_channels(),
                    b.out_channels()
                )));
            }
        }
        if projection.kernel_size() != (1, 1) || projection.in_channels() != 5 * width {
            return Err(Error::Params(format!(
                "projection must be 1x1 over {} concatenated channels",
                5 * width
            )));
        }
        Ok(Self {
            branches,
            image_pool,
            projection,
        })
    }

    /// Parameters drawn from `value` in a fixed order: image pool, the four
    /// branches by rate, projection; each kernel's weights then its bias.
    /// Biases are omitted entirely when `with_bias` is false.
    pub fn generate(
        in_channels: usize,
        branch_channels: usize,
        out_channels: usize,
        with_bias: bool,
        mut value: impl FnMut() -> f64,
    ) -> Result<Self> {
        if in_channels == 0 || branch_channels == 0 || out_channels == 0 {
            return Err(Error::NonPositive { name: "channels" });
        }
        let mut make = |o: usize, i: usize, k: usize| -> Result<Kernel2D> {
            let w = Kernel2D::from_fn(o, i, k, k, |_, _, _, _| value(), None)?;
            let bias = with_bias.then(|| (0..o).map(|_| value()).collect());
            Kernel2D::new(o, i, k, k, w.weights().to_vec(), bias)
        };
        let image_pool = make(branch_channels, in_channels, 1)?;
        let branches = [
            make(branch_channels, in_channels, 1)?,
            make(branch_channels, in_channels, 3)?,
            make(branch_channels, in_channels, 3)?,
            make(branch_channels, in_channels, 3)?,
        ];
        let projection = make(out_channels, 5 * branch_channels, 1)?;
        Self::new(branches, image_pool, projection)
    }

    pub fn in_channels(&self) -> usize {
        self.image_pool.in_channels()
    }

    pub fn branch_channels(&self) -> usize {
        self.image_pool.out_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.projection.out_channels()
    }

    pub fn branches(&self) -> &[Kernel2D; 4] {
        &self.branches
    }

    pub fn image_pool(&self) -> &Kernel2D {
        &self.image_pool
    }

    pub fn projection(&self) -> &Kernel2D {
        &self.projection
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().map(Kernel2D::param_count).sum::<usize>()
            + self.image_pool.param_count()
            + self.projection.param_count()
    }
}

fn check_channels(input: &Tensor, expected: usize) -> Result<()> {
    if input.shape().c != expected {
        return Err(Error::ChannelMismatch {
            expected,
            actual: input.shape().c,
        });
    }
    Ok(())
}

/// Multiplies every (n, c) plane by `weights[n * C + c]`.
fn scale_channels(input: &Tensor, weights: &[f64]) -> Tensor {
    let s = input.shape();
    let plane = s.plane_len();
    let data = input
        .data()
        .chunks_exact(plane)
        .zip(weights)
        .flat_map(|(p, &k)| p.iter().map(move |v| v * k))
        .collect();
    Tensor::from_parts(s, data)
}

/// Multiplies every channel of sample n by the n-th plane of `map`.
fn scale_spatial(input: &Tensor, map: &Tensor) -> Tensor {
    let s = input.shape();
    let mut data = Vec::with_capacity(s.len());
    for n in 0..s.n {
        let m = map.plane(n, 0);
        for c in 0..s.c {
            data.extend(input.plane(n, c).iter().zip(m).map(|(v, k)| v * k));
        }
    }
    Tensor::from_parts(s, data)
}

/// `M_C = sigmoid(MLP(avgpool F) + MLP(maxpool F))`, shaped N x C x 1 x 1.
pub fn channel_attention(f: &Tensor, p: &ChannelAttentionParams) -> Result<Tensor> {
    check_channels(f, p.channels())?;
    let s = f.shape();
    let avg = global_avg_pool(f);
    let max = global_max_pool(f);
    let mut data = Vec::with_capacity(s.n * s.c);
    for (a, m) in avg.data().chunks_exact(s.c).zip(max.data().chunks_exact(s.c)) {
        let ea = p.forward(a);
        let em = p.forward(m);
        data.extend(ea.iter().zip(&em).map(|(x, y)| sigmoid(x + y)));
    }
    Ok(Tensor::from_parts(Shape::new(s.n, s.c, 1, 1), data))
}

/// Channel-wise mean and max maps stacked as a 2-channel tensor.
pub fn channel_pool(f: &Tensor) -> Tensor {
    let s = f.shape();
    let plane = s.plane_len();
    let mut data = Vec::with_capacity(s.n * 2 * plane);
    for n in 0..s.n {
        let mut mean = alloc::vec![0.0; plane];
        let mut max = alloc::vec![f64::NEG_INFINITY; plane];
        for c in 0..s.c {
            for (i, &v) in f.plane(n, c).iter().enumerate() {
                mean[i] += v;
                max[i] = max[i].max(v);
            }
        }
        let inv = 1.0 / s.c as f64;
        data.extend(mean.iter().map(|v| v * inv));
        data.extend(max);
    }
    Tensor::from_parts(Shape::new(s.n, 2, s.h, s.w), data)
}

/// `M_S = sigmoid(conv7x7([mean_c F; max_c F]))`, shaped N x 1 x H x W.
pub fn spatial_attention(f: &Tensor, p: &SpatialAttentionParams) -> Result<Tensor> {
    let pooled = channel_pool(f);
    let logits = conv2d(&pooled, &p.kernel, 1, 1, Padding::Zero)?;
    Ok(logits.map(sigmoid))
}

/// `F' = M_C(F) * F`, then `F'' = M_S(F') * F'`.
pub fn cbam(f: &Tensor, cp: &ChannelAttentionParams, sp: &SpatialAttentionParams) -> Result<Tensor> {
    let mc = channel_attention(f, cp)?;
    let refined = scale_channels(f, mc.data());
    let ms = spatial_attention(&refined, sp)?;
    Ok(scale_spatial(&refined, &ms))
}

/// Channel weights `sigmoid(W_s relu(W_r z))` with `z` the global average, N x C x 1 x 1.
pub fn se_excitation(u: &Tensor, p: &SeParams) -> Result<Tensor> {
    check_channels(u, p.channels())?;
    let s = u.shape();
    let squeezed = global_avg_pool(u);
    let data = squeezed
        .data()
        .chunks_exact(s.c)
        .flat_map(|z| p.forward(z).into_iter().map(sigmoid))
        .collect();
    Ok(Tensor::from_parts(Shape::new(s.n, s.c, 1, 1), data))
}

/// Rescales each channel of `u` by its excitation weight.
pub fn se_block(u: &Tensor, p: &SeParams) -> Result<Tensor> {
    let weights = se_excitation(u, p)?;
    Ok(scale_channels(u, weights.data()))
}

/// Output of one ASPP branch at input resolution; index 0 is the image-pool
/// branch, 1..=4 the convolutions at [`ASPP_RATES`].
pub fn aspp_branch(a: &Tensor, p: &AsppParams, index: usize) -> Result<Tensor> {
    check_channels(a, p.in_channels())?;
    let s = a.shape();
    match index {
        0 => {
            let pooled = conv2d(&global_avg_pool(a), &p.image_pool, 1, 1, Padding::Zero)?;
            upsample_bilinear(&pooled, s.h, s.w)
        }
        1..=4 => conv2d(a, &p.branches[index - 1], ASPP_RATES[index - 1], 1, Padding::Zero),
        _ => Err(Error::OutOfRange {
            name: "ASPP branch",
            value: index as f64,
            range: "0..=4",
        }),
    }
}

/// Concatenate the five branches and project with the final 1x1 convolution.
pub fn aspp(a: &Tensor, p: &AsppParams) -> Result<Tensor> {
    let outs = (0..5).map(|i| aspp_branch(a, p, i)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = outs.iter().collect();
    let cat = Tensor::concat_channels(&refs)?;
    conv2d(&cat, &p.projection, 1, 1, Padding::Zero)
}

/// SE reweighting of the input, fed into ASPP.
pub fn as_se(a: &Tensor, se: &SeParams, aspp_params: &AsppParams) -> Result<Tensor> {
    aspp(&se_block(a, se)?, aspp_params)
}
