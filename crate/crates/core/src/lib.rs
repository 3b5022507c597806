//! Scale-space flow learned video compression.
//!
//! The crate is organized bottom-up:
//!
//! * [`scale_space`]: blurred reference volumes and trilinear warping.
//! * [`transforms`]: convolutional, Swin and FLaWin analysis/synthesis networks.
//! * [`entropy`]: quantization, likelihood models, and the range coder.
//! * [`codec`]: I-frame and P-frame models, GOP compression and the container.
//! * [`training`]: the rate-distortion objective, optimizer loop and sweeps.
//! * [`data`], [`metrics`], [`eval`]: datasets, PSNR/bpp, and RD reporting.
//! * [`checkpoint`], [`cli`]: model files and the `ssf` command.

pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod data;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod nn;
pub mod scale_space;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
