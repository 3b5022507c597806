use candle_core::{Tensor, D};

use super::params::Scope;
use crate::error::Result;

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual default for conv/linear layers.
    FanIn,
    Zeros,
}

fn init_tensor(s: &mut Scope, name: &str, shape: &[usize], fan_in: usize, init: Init) -> Result<Tensor> {
    match init {
        Init::Normal(std) => s.normal(name, shape, std),
        Init::FanIn => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            s.uniform(name, shape, -bound, bound)
        }
        Init::Zeros => s.constant(name, shape, 0.0),
    }
}

/// Affine map over the last dimension.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(s: &mut Scope, in_dim: usize, out_dim: usize, init: Init) -> Result<Self> {
        let weight = init_tensor(s, "weight", &[out_dim, in_dim], in_dim, init)?;
        let bias = s.constant("bias", out_dim, 0.0)?;
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let last = *dims.last().expect("linear input must have rank >= 1");
        let rows = x.elem_count() / last;
        let y = x
            .reshape((rows, last))?
            .matmul(&self.weight.t()?)?
            .broadcast_add(&self.bias)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.out_dim();
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        s: &mut Scope,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = init_tensor(
            s,
            "weight",
            &[out_ch, in_ch, kernel, kernel],
            in_ch * kernel * kernel,
            Init::FanIn,
        )?;
        let bias = s.constant("bias", out_ch, 0.0)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_ch = self.weight.dims()[0];
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, out_ch, 1, 1))?)?)
    }
}

/// Transposed convolution; kernel layout is `(in, out, k, k)`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        s: &mut Scope,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel * kernel / (stride * stride);
        let weight = init_tensor(
            s,
            "weight",
            &[in_ch, out_ch, kernel, kernel],
            fan_in.max(1),
            Init::FanIn,
        )?;
        let bias = s.constant("bias", out_ch, 0.0)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            output_padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_ch = self.weight.dims()[1];
        let y = x.conv_transpose2d(
            &self.weight,
            self.padding,
            self.output_padding,
            self.stride,
            1,
        )?;
        Ok(y.broadcast_add(&self.bias.reshape((1, out_ch, 1, 1))?)?)
    }
}

/// Layer normalization over the last dimension with learnable affine.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(s: &mut Scope, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: s.constant("gamma", dim, 1.0)?,
            beta: s.constant("beta", dim, 0.0)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.gamma)?
            .broadcast_add(&self.beta)?)
    }
}

pub fn gelu(x: &Tensor) -> Result<Tensor> {
    Ok(x.gelu_erf()?)
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((pos + tail)?)
}

/// Replicate-pads `x` along `dim` by repeating its edge values.
pub fn pad_replicate(x: &Tensor, dim: usize, before: usize, after: usize) -> Result<Tensor> {
    if before == 0 && after == 0 {
        return Ok(x.clone());
    }
    let n = x.dims()[dim] as i64;
    let idx: Vec<u32> = (-(before as i64)..n + after as i64)
        .map(|i| i.clamp(0, n - 1) as u32)
        .collect();
    let idx = Tensor::new(idx.as_slice(), x.device())?;
    Ok(x.contiguous()?.index_select(&idx, dim)?)
}

/// Clamps to `[lo, hi]` in value while passing the gradient straight through.
pub fn clamp_straight_through(x: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
    let clamped = x.clamp(lo, hi)?;
    Ok((x + (clamped - x)?.detach())?)
}
