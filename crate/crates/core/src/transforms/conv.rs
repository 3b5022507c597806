//! Strided-convolution baseline transforms.

use candle_core::Tensor;

use super::config::TransformConfig;
use crate::error::{invalid, Result};
use crate::nn::{gelu, Conv2d, ConvTranspose2d, Scope};

const KERNEL: usize = 5;

fn num_layers(cfg: &TransformConfig) -> usize {
    cfg.downsample_factor().trailing_zeros() as usize
}

/// Stride-2 5x5 convolutions with GELU in between.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub cfg: TransformConfig,
    pub layers: Vec<Conv2d>,
}

impl ConvEncoder {
    pub fn new(s: &mut Scope, cfg: &TransformConfig) -> Result<Self> {
        cfg.validate()?;
        let n = num_layers(cfg);
        let layers = (0..n)
            .map(|i| {
                let cin = if i == 0 { cfg.in_channels } else { cfg.embed_dim };
                let cout = if i + 1 == n { cfg.latent_channels } else { cfg.embed_dim };
                Conv2d::new(&mut s.pp(format!("conv{i}")), cin, cout, KERNEL, 2, KERNEL / 2)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            layers,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.cfg.in_channels {
            return Err(invalid!("expected {} input channels, got {c}", self.cfg.in_channels));
        }
        self.cfg.validate_input(h, w)?;
        let mut y = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            y = layer.forward(&y)?;
            if i + 1 < self.layers.len() {
                y = gelu(&y)?;
            }
        }
        Ok(y)
    }
}

/// Transposed-convolution mirror of [`ConvEncoder`].
#[derive(Debug, Clone)]
pub struct ConvDecoder {
    pub cfg: TransformConfig,
    pub layers: Vec<ConvTranspose2d>,
}

impl ConvDecoder {
    pub fn new(s: &mut Scope, cfg: &TransformConfig) -> Result<Self> {
        cfg.validate()?;
        let n = num_layers(cfg);
        let layers = (0..n)
            .map(|i| {
                let cin = if i == 0 { cfg.latent_channels } else { cfg.embed_dim };
                let cout = if i + 1 == n { cfg.out_channels } else { cfg.embed_dim };
                ConvTranspose2d::new(&mut s.pp(format!("deconv{i}")), cin, cout, KERNEL, 2, KERNEL / 2, 1)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            layers,
        })
    }

    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = y.dims4()?;
        if c != self.cfg.latent_channels {
            return Err(invalid!(
                "expected {} latent channels, got {c}",
                self.cfg.latent_channels
            ));
        }
        let mut x = y.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if i + 1 < self.layers.len() {
                x = gelu(&x)?;
            }
        }
        Ok(x)
    }
}
