use candle_core::Tensor;

use crate::error::Result;

/// Lower clamp applied to every likelihood before taking logs (2^-32).
pub const LIKELIHOOD_FLOOR: f64 = 1.0 / 4_294_967_296.0;

/// Total information content `sum(-log2 p)` in bits, as a scalar tensor.
pub fn rate_bits(p: &Tensor) -> Result<Tensor> {
    Ok((p.log()?.sum_all()? * (-1.0 / std::f64::consts::LN_2))?)
}
