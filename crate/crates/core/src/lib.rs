//! Numeric kernels behind the `pave-forge` toolkit.
//!
//! Everything here is a pure function over owned buffers: dilated 2-D
//! convolution and resampling, the four-direction Scharr gradient, Gaussian
//! and Laplacian pyramids with multiband fusion, CycleGAN loss terms,
//! CBAM / SE / ASPP / AS-SE forward passes, IoU-family box losses with
//! analytic gradients, and detection metrics.
//!
//! The crate is `no_std` and only needs `alloc`. Transcendental functions come
//! from [`libm`], so results do not depend on the platform's math library.
//! File formats, the augmentation pipeline and the command line live in the
//! `pave-forge` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attention;
pub mod boxes;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod ops;
pub mod pyramid;
pub mod scharr;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{BinaryMask, Image, Kernel2D, PixelRect, Shape, Tensor};
