//! Quantization, likelihood models, rate estimation and entropy coding.

pub mod cdf;
mod factorized;
mod gaussian;
mod quantize;
pub mod range_coder;
mod rate;

pub use cdf::CdfTable;
pub use factorized::{FactorizedPrior, PriorSnapshot};
pub use gaussian::GaussianConditional;
pub use quantize::{quantize_test, quantize_train, to_symbols};
pub use range_coder::{
    estimate_bits, frame_chunk, range_decode, range_encode, read_chunk, RangeDecoder,
    RangeEncoder,
};
pub use rate::{rate_bits, LIKELIHOOD_FLOOR};

/// Integer latents of one coded unit, with their tensor shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentCode {
    pub y_hat: Vec<i32>,
    pub y_shape: Vec<usize>,
    pub z_hat: Vec<i32>,
    pub z_shape: Vec<usize>,
}
