use serde::{Deserialize, Serialize};

use crate::error::{config_err, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformFamily {
    Conv,
    Swin,
    Flawin,
}

impl TransformFamily {
    pub const ALL: [TransformFamily; 3] = [Self::Conv, Self::Swin, Self::Flawin];

    pub fn name(self) -> &'static str {
        match self {
            Self::Conv => "conv",
            Self::Swin => "swin",
            Self::Flawin => "flawin",
        }
    }
}

impl std::fmt::Display for TransformFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TransformFamily {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conv" | "ssf-conv" => Ok(Self::Conv),
            "swin" | "ssf-swin" => Ok(Self::Swin),
            "flawin" | "ssf-flawin" => Ok(Self::Flawin),
            other => Err(invalid!("unknown transform family `{other}`")),
        }
    }
}

/// Shape of one analysis/synthesis transform pair.
///
/// For the conv family `embed_dim` is the hidden channel count and the number
/// of stride-2 layers is chosen so the total downsampling matches the
/// transformer families with the same `patch_size` and stage count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub family: TransformFamily,
    pub in_channels: usize,
    /// Channels produced by the synthesis transform.
    pub out_channels: usize,
    pub embed_dim: usize,
    /// Transformer blocks per stage; each entry must be even (block pairs).
    pub stage_depths: Vec<usize>,
    pub window_size: usize,
    pub num_heads: Vec<usize>,
    pub patch_size: usize,
    pub latent_channels: usize,
    /// Hidden width ratio of the Swin MLP.
    pub mlp_ratio: f64,
    /// Hidden width ratio of FLaFF.
    pub flaff_expansion: f64,
}

impl TransformConfig {
    /// Desk-scale defaults: patch 2, four stages of one block pair each,
    /// window 4, total downsampling 16.
    pub fn desk(family: TransformFamily, in_channels: usize, out_channels: usize) -> Self {
        let embed_dim = match family {
            TransformFamily::Conv => 32,
            _ => 16,
        };
        Self {
            family,
            in_channels,
            out_channels,
            embed_dim,
            stage_depths: vec![2, 2, 2, 2],
            window_size: 4,
            num_heads: vec![2, 4, 8, 16],
            patch_size: 2,
            latent_channels: 32,
            mlp_ratio: 3.0,
            flaff_expansion: 3.0,
        }
    }

    /// Full-size shape for 256x256 crops.
    pub fn full(family: TransformFamily, in_channels: usize, out_channels: usize) -> Self {
        let embed_dim = match family {
            TransformFamily::Conv => 128,
            _ => 64,
        };
        Self {
            embed_dim,
            window_size: 8,
            latent_channels: 192,
            ..Self::desk(family, in_channels, out_channels)
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stage_depths.len()
    }

    pub fn stage_dim(&self, stage: usize) -> usize {
        self.embed_dim << stage
    }

    /// Ratio between input side and latent side.
    pub fn downsample_factor(&self) -> usize {
        self.patch_size << (self.num_stages().saturating_sub(1))
    }

    pub fn flaff_hidden(&self, dim: usize) -> usize {
        (dim as f64 * self.flaff_expansion).round() as usize
    }

    pub fn mlp_hidden(&self, dim: usize) -> usize {
        (dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.latent_channels == 0 {
            return Err(config_err!("channel counts must be positive"));
        }
        if self.embed_dim == 0 || self.patch_size == 0 {
            return Err(config_err!("embed_dim and patch_size must be positive"));
        }
        if self.stage_depths.is_empty() {
            return Err(config_err!("at least one stage is required"));
        }
        if self.family == TransformFamily::Conv {
            if !self.downsample_factor().is_power_of_two() || self.downsample_factor() < 2 {
                return Err(config_err!(
                    "conv family needs a power-of-two downsampling factor >= 2, got {}",
                    self.downsample_factor()
                ));
            }
            return Ok(());
        }
        if self.num_heads.len() != self.stage_depths.len() {
            return Err(config_err!(
                "num_heads has {} entries but there are {} stages",
                self.num_heads.len(),
                self.stage_depths.len()
            ));
        }
        if self.window_size == 0 {
            return Err(config_err!("window_size must be positive"));
        }
        for (i, (&depth, &heads)) in self.stage_depths.iter().zip(&self.num_heads).enumerate() {
            let dim = self.stage_dim(i);
            if depth == 0 || depth % 2 != 0 {
                return Err(config_err!(
                    "stage {i} depth {depth} must be a positive even number (blocks come in W-MSA/SW-MSA pairs)"
                ));
            }
            if heads == 0 || dim % heads != 0 {
                return Err(config_err!(
                    "stage {i}: embedding dim {dim} must be divisible by head count {heads}"
                ));
            }
            if self.family == TransformFamily::Flawin {
                let hidden = self.flaff_hidden(dim);
                if hidden == 0 || hidden % 3 != 0 {
                    return Err(config_err!(
                        "stage {i}: FLaFF width round({dim} * {}) = {hidden} must be divisible by 3",
                        self.flaff_expansion
                    ));
                }
            } else if self.mlp_hidden(dim) == 0 {
                return Err(config_err!("stage {i}: MLP width must be positive"));
            }
        }
        Ok(())
    }

    /// Checks that an `h x w` input fits the patch and window grid.
    pub fn validate_input(&self, h: usize, w: usize) -> Result<()> {
        let f = self.downsample_factor();
        if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
            return Err(invalid!(
                "input {h}x{w} must have both sides divisible by {f} (patch {} x 2^{})",
                self.patch_size,
                self.num_stages() - 1
            ));
        }
        if self.family != TransformFamily::Conv {
            for i in 0..self.num_stages() {
                let (th, tw) = (h / (self.patch_size << i), w / (self.patch_size << i));
                if th % self.window_size != 0 || tw % self.window_size != 0 {
                    return Err(invalid!(
                        "stage {i} token map {th}x{tw} must be divisible by window size {}",
                        self.window_size
                    ));
                }
            }
        }
        Ok(())
    }
}
