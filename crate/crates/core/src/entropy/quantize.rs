use candle_core::Tensor;
use rand::Rng;

use crate::error::Result;

/// Adds i.i.d. `U[-0.5, 0.5)` noise. The noise is a constant with respect to
/// autodiff, so the gradient with respect to `y` is the identity.
pub fn quantize_train<R: Rng + ?Sized>(y: &Tensor, rng: &mut R) -> Result<Tensor> {
    let noise: Vec<f64> = (0..y.elem_count())
        .map(|_| rng.gen::<f64>() - 0.5)
        .collect();
    let noise = Tensor::from_vec(noise, y.shape(), y.device())?.to_dtype(y.dtype())?;
    Ok((y + noise)?)
}

/// Rounds half away from zero.
pub fn quantize_test(y: &Tensor) -> Result<Tensor> {
    Ok(y.detach().round()?)
}

/// Rounds a tensor and reads it back as integers.
pub fn to_symbols(y: &Tensor) -> Result<Vec<i32>> {
    Ok(quantize_test(y)?
        .to_dtype(candle_core::DType::F64)?
        .flatten_all()?
        .to_vec1::<f64>()?
        .into_iter()
        .map(|v| v as i32)
        .collect())
}
