//! Analysis and synthesis transforms: strided convolutions, Swin, and FLaWin.

pub mod attention;
mod config;
pub mod conv;
pub mod flaff;
pub mod swin;
pub mod tokens;

use candle_core::Tensor;

pub use attention::WindowAttention;
pub use config::{TransformConfig, TransformFamily};
pub use flaff::{Flaff, InceptionBlock};
pub use swin::{FeedForward, Mlp, PatchMerge, PatchSplit, SwinBlock, SwinBlockPair};
pub use tokens::{patchify, unpatchify, TokenMap};

use crate::error::Result;
use crate::nn::Scope;

/// Image to latent.
#[derive(Debug, Clone)]
pub enum AnalysisTransform {
    Conv(conv::ConvEncoder),
    Transformer(swin::SwinEncoder),
}

impl AnalysisTransform {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Self::Conv(e) => e.forward(x),
            Self::Transformer(e) => e.forward(x),
        }
    }
}

/// Latent to image.
#[derive(Debug, Clone)]
pub enum SynthesisTransform {
    Conv(conv::ConvDecoder),
    Transformer(swin::SwinDecoder),
}

impl SynthesisTransform {
    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        match self {
            Self::Conv(d) => d.forward(y),
            Self::Transformer(d) => d.forward(y),
        }
    }
}

pub fn build_encoder(s: &mut Scope, cfg: &TransformConfig) -> Result<AnalysisTransform> {
    Ok(match cfg.family {
        TransformFamily::Conv => AnalysisTransform::Conv(conv::ConvEncoder::new(s, cfg)?),
        _ => AnalysisTransform::Transformer(swin::SwinEncoder::new(s, cfg)?),
    })
}

pub fn build_decoder(s: &mut Scope, cfg: &TransformConfig) -> Result<SynthesisTransform> {
    Ok(match cfg.family {
        TransformFamily::Conv => SynthesisTransform::Conv(conv::ConvDecoder::new(s, cfg)?),
        _ => SynthesisTransform::Transformer(swin::SwinDecoder::new(s, cfg)?),
    })
}
