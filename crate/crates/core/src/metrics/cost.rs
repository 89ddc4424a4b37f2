//! Parameter and FLOP counts for the attention blocks.
//!
//! A multiply-accumulate counts as two FLOPs; a bias add as one. Dilated
//! convolutions are charged for every tap, including those landing in zero
//! padding. Elementwise work (pooling, activations, rescaling, broadcasting
//! the image-pool branch) is tallied separately at one FLOP per value touched.

use alloc::string::ToString;
use core::fmt;
use core::str::FromStr;

use crate::attention::{hidden_width, DEFAULT_REDUCTION, SPATIAL_KERNEL};
use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Cbam,
    Se,
    Aspp,
    AsSe,
}

impl BlockKind {
    pub const ALL: [BlockKind; 4] = [BlockKind::Cbam, BlockKind::Se, BlockKind::Aspp, BlockKind::AsSe];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Cbam => "cbam",
            BlockKind::Se => "se",
            BlockKind::Aspp => "aspp",
            BlockKind::AsSe => "asse",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cbam" => Ok(BlockKind::Cbam),
            "se" => Ok(BlockKind::Se),
            "aspp" => Ok(BlockKind::Aspp),
            "asse" | "as-se" | "as_se" => Ok(BlockKind::AsSe),
            _ => Err(Error::UnknownBlock(s.to_string())),
        }
    }
}

/// Concrete dimensions of one block instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub input: Shape,
    /// Bottleneck reduction of the CBAM / SE MLP.
    pub reduction: usize,
    /// Width of each ASPP branch.
    pub branch_channels: usize,
    /// Channels after the ASPP projection.
    pub out_channels: usize,
    /// Whether ASPP convolutions carry biases.
    pub aspp_bias: bool,
}

impl BlockSpec {
    /// Defaults: reduction `gcd(C, 16)`, ASPP branches and output `C` wide, with biases.
    pub fn new(kind: BlockKind, input: Shape) -> Result<Self> {
        let spec = Self {
            kind,
            input,
            reduction: gcd(input.c, DEFAULT_REDUCTION).max(1),
            branch_channels: input.c,
            out_channels: input.c,
            aspp_bias: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.input;
        if s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0 {
            return Err(Error::EmptyShape(s));
        }
        if matches!(self.kind, BlockKind::Cbam | BlockKind::Se | BlockKind::AsSe) {
            hidden_width(s.c, self.reduction)?;
        }
        if matches!(self.kind, BlockKind::Aspp | BlockKind::AsSe) && (self.branch_channels == 0 || self.out_channels == 0) {
            return Err(Error::NonPositive { name: "ASPP channels" });
        }
        Ok(())
    }

    /// Shape of the block's output tensor.
    pub fn output_shape(&self) -> Shape {
        match self.kind {
            BlockKind::Cbam | BlockKind::Se => self.input,
            BlockKind::Aspp | BlockKind::AsSe => Shape::new(self.input.n, self.out_channels, self.input.h, self.input.w),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockCost {
    pub params: u64,
    /// Spatial convolutions; proportional to H x W.
    pub conv_flops: u64,
    /// Fully connected layers and the 1x1 on the pooled vector.
    pub dense_flops: u64,
    pub elementwise_flops: u64,
}

impl BlockCost {
    pub fn flops(&self) -> u64 {
        self.conv_flops + self.dense_flops + self.elementwise_flops
    }
}

impl core::ops::Add for BlockCost {
    type Output = BlockCost;

    fn add(self, o: BlockCost) -> BlockCost {
        BlockCost {
            params: self.params + o.params,
            conv_flops: self.conv_flops + o.conv_flops,
            dense_flops: self.dense_flops + o.dense_flops,
            elementwise_flops: self.elementwise_flops + o.elementwise_flops,
        }
    }
}

fn dense(inputs: u64, outputs: u64) -> u64 {
    2 * inputs * outputs + outputs
}

fn conv(cin: u64, cout: u64, k: u64, hw: u64, bias: bool) -> u64 {
    (2 * cin * cout * k * k + if bias { cout } else { 0 }) * hw
}

fn conv_params(cin: u64, cout: u64, k: u64, bias: bool) -> u64 {
    cin * cout * k * k + if bias { cout } else { 0 }
}

fn bottleneck_params(c: u64, hidden: u64) -> u64 {
    c * hidden + hidden + hidden * c + c
}

fn bottleneck_flops(c: u64, hidden: u64) -> u64 {
    dense(c, hidden) + dense(hidden, c)
}

fn se_cost(s: Shape, reduction: usize) -> Result<BlockCost> {
    let hidden = hidden_width(s.c, reduction)? as u64;
    let (n, c, hw) = (s.n as u64, s.c as u64, (s.h * s.w) as u64);
    Ok(BlockCost {
        params: bottleneck_params(c, hidden),
        conv_flops: 0,
        dense_flops: n * bottleneck_flops(c, hidden),
        // pool, relu, sigmoid, rescale
        elementwise_flops: n * (c * hw + hidden + c + c * hw),
    })
}

fn cbam_cost(s: Shape, reduction: usize) -> Result<BlockCost> {
    let hidden = hidden_width(s.c, reduction)? as u64;
    let (n, c, hw) = (s.n as u64, s.c as u64, (s.h * s.w) as u64);
    let k = SPATIAL_KERNEL as u64;
    Ok(BlockCost {
        params: bottleneck_params(c, hidden) + conv_params(2, 1, k, true),
        conv_flops: n * conv(2, 1, k, hw, true),
        dense_flops: n * 2 * bottleneck_flops(c, hidden),
        elementwise_flops: n
            * (2 * c * hw      // avg and max pools
                + 2 * hidden   // relu on both paths
                + 2 * c        // sum of paths, sigmoid
                + c * hw       // channel rescale
                + 2 * c * hw   // channel-wise mean and max
                + hw           // sigmoid
                + c * hw), // spatial rescale
    })
}

fn aspp_cost(spec: &BlockSpec, c_in: usize) -> BlockCost {
    let s = spec.input;
    let (n, c, hw) = (s.n as u64, c_in as u64, (s.h * s.w) as u64);
    let (b, o, bias) = (spec.branch_channels as u64, spec.out_channels as u64, spec.aspp_bias);
    let params = conv_params(c, b, 1, bias) * 2 + conv_params(c, b, 3, bias) * 3 + conv_params(5 * b, o, 1, bias);
    let conv_flops = conv(c, b, 1, hw, bias) + 3 * conv(c, b, 3, hw, bias) + conv(5 * b, o, 1, hw, bias);
    BlockCost {
        params,
        conv_flops: n * conv_flops,
        dense_flops: n * (2 * c * b + if bias { b } else { 0 }),
        // global pool, broadcast of the pooled branch
        elementwise_flops: n * (c * hw + b * hw),
    }
}

/// Exact parameter count and per-forward FLOPs for a block.
pub fn count_params_flops(spec: &BlockSpec) -> Result<BlockCost> {
    spec.validate()?;
    let s = spec.input;
    match spec.kind {
        BlockKind::Se => se_cost(s, spec.reduction),
        BlockKind::Cbam => cbam_cost(s, spec.reduction),
        BlockKind::Aspp => Ok(aspp_cost(spec, s.c)),
        BlockKind::AsSe => Ok(se_cost(s, spec.reduction)? + aspp_cost(spec, s.c)),
    }
}

/// Hardware peak `cores x clock x operations per cycle`.
pub fn peak_flops(cores: u64, clock_hz: f64, ops_per_cycle: u64) -> f64 {
    cores as f64 * clock_hz * ops_per_cycle as f64
}
