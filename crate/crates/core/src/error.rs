use alloc::string::String;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("buffer holds {actual} values but shape {shape} needs {expected}")]
    DataLength {
        shape: Shape,
        expected: usize,
        actual: usize,
    },

    #[error("invalid shape {0}: every dimension must be at least 1")]
    EmptyShape(Shape),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape, right: Shape },

    #[error("effective kernel {kernel_h}x{kernel_w} exceeds padded input {input_h}x{input_w}")]
    KernelTooLarge {
        kernel_h: usize,
        kernel_w: usize,
        input_h: usize,
        input_w: usize,
    },

    #[error("{name} must be positive")]
    NonPositive { name: &'static str },

    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),

    #[error("gradient computation needs a single-channel image; convert RGB to grayscale first")]
    NotGrayscale,

    #[error("image is {height}x{width}; at least {min}x{min} is required")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("cannot upsample {from_h}x{from_w} to {to_h}x{to_w}: target must be 2n-1 or 2n per axis")]
    UpsampleTarget {
        from_h: usize,
        from_w: usize,
        to_h: usize,
        to_w: usize,
    },

    #[error("{levels} pyramid levels do not fit a {height}x{width} image (coarsest level must stay at least 2x2)")]
    TooManyLevels {
        levels: usize,
        height: usize,
        width: usize,
    },

    #[error("pyramid level count must be at least 2, got {0}")]
    TooFewLevels(usize),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("degenerate box ({x1}, {y1}, {x2}, {y2}): need x1 < x2 and y1 < y2")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("reduction {reduction} does not divide {channels} channels")]
    Reduction { channels: usize, reduction: usize },

    #[error("parameter dimensions are inconsistent: {0}")]
    Params(String),

    #[error("unknown block kind `{0}` (expected cbam, se, aspp or asse)")]
    UnknownBlock(String),
}
