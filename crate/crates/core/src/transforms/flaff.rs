//! Fused local-aware feed-forward network and its three-branch inception block.

use candle_core::{IndexOp, Tensor};

use crate::error::{config_err, invalid, Result};
use crate::nn::{gelu, pad_replicate, Init, Linear, Scope};

/// 3x3 depthwise convolution with edge-replicating padding.
///
/// `x` is `(B, C, h, w)`, `weight` is `(C, 3, 3)` and `bias` is `(C,)`.
pub fn depthwise3x3(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    if weight.dims() != [c, 3, 3] {
        return Err(invalid!(
            "depthwise kernel shape {:?} does not match {c} channels",
            weight.dims()
        ));
    }
    let padded = pad_replicate(&pad_replicate(x, 2, 1, 1)?, 3, 1, 1)?;
    let mut acc = bias.reshape((1, c, 1, 1))?.broadcast_as(x.dims())?.contiguous()?;
    for ky in 0..3 {
        for kx in 0..3 {
            let tap = weight.i((.., ky, kx))?.reshape((1, c, 1, 1))?;
            let shifted = padded.narrow(2, ky, h)?.narrow(3, kx, w)?;
            acc = (acc + shifted.broadcast_mul(&tap)?)?;
        }
    }
    Ok(acc)
}

/// Splits channels into three contiguous groups, runs an independent 3x3
/// depthwise convolution on each and concatenates the results in order.
#[derive(Debug, Clone)]
pub struct InceptionBlock {
    /// Per branch `(weight (C/3, 3, 3), bias (C/3,))`.
    pub branches: Vec<(Tensor, Tensor)>,
}

impl InceptionBlock {
    pub fn new(s: &mut Scope, channels: usize) -> Result<Self> {
        if channels == 0 || channels % 3 != 0 {
            return Err(config_err!(
                "inception block needs channels divisible by 3, got {channels}"
            ));
        }
        let group = channels / 3;
        let bound = 1.0 / 3.0;
        let branches = (0..3)
            .map(|g| {
                let mut b = s.pp(format!("branch{g}"));
                let w = b.uniform("weight", (group, 3, 3), -bound, bound)?;
                let bias = b.constant("bias", group, 0.0)?;
                Ok((w, bias))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { branches })
    }

    pub fn channels(&self) -> usize {
        self.branches.iter().map(|(w, _)| w.dims()[0]).sum()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.channels() {
            return Err(config_err!(
                "inception block built for {} channels, got {c}",
                self.channels()
            ));
        }
        let group = c / 3;
        let outs = self
            .branches
            .iter()
            .enumerate()
            .map(|(g, (w, b))| depthwise3x3(&x.narrow(1, g * group, group)?, w, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&outs, 1)?)
    }
}

/// Pointwise expansion, inception block over the 2-D token map, pointwise
/// reduction. GELU follows the expansion and the inception block.
#[derive(Debug, Clone)]
pub struct Flaff {
    pub up: Linear,
    pub inception: InceptionBlock,
    pub down: Linear,
}

impl Flaff {
    pub fn new(s: &mut Scope, dim: usize, hidden: usize) -> Result<Self> {
        if hidden % 3 != 0 {
            return Err(config_err!(
                "FLaFF hidden width {hidden} must be divisible by 3"
            ));
        }
        Ok(Self {
            up: Linear::new(&mut s.pp("up"), dim, hidden, Init::Normal(0.02))?,
            inception: InceptionBlock::new(&mut s.pp("inception"), hidden)?,
            down: Linear::new(&mut s.pp("down"), hidden, dim, Init::Normal(0.02))?,
        })
    }

    /// `x` is a token map `(B, h, w, C)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let expanded = gelu(&self.up.forward(x)?)?;
        let map = expanded.permute((0, 3, 1, 2))?.contiguous()?;
        let mixed = gelu(&self.inception.forward(&map)?)?;
        let tokens = mixed.permute((0, 2, 3, 1))?.contiguous()?;
        self.down.forward(&tokens)
    }
}
