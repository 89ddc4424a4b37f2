//! Image IO, file formats, the augmentation pipeline and the `pave-forge`
//! command line, built on the numeric kernels of `pave-forge-core`.

pub mod blocks;
pub mod cli;
pub mod formats;
pub mod io;
pub mod pipeline;
pub mod split;
