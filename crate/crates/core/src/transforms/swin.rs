//! Swin / FLaWin transformer blocks and the hierarchical encoder/decoder.

use candle_core::Tensor;

use super::attention::{shifted_window_mask, WindowAttention};
use super::config::{TransformConfig, TransformFamily};
use super::flaff::Flaff;
use super::tokens::{patchify, unpatchify, window_partition, window_reverse, TokenMap};
use crate::error::{invalid, Result};
use crate::nn::{gelu, Init, LayerNorm, Linear, Scope};

/// Two-layer MLP with GELU.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(s: &mut Scope, dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(&mut s.pp("fc1"), dim, hidden, Init::Normal(0.02))?,
            fc2: Linear::new(&mut s.pp("fc2"), hidden, dim, Init::Normal(0.02))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&gelu(&self.fc1.forward(x)?)?)
    }
}

#[derive(Debug, Clone)]
pub enum FeedForward {
    Mlp(Mlp),
    Flaff(Flaff),
}

impl FeedForward {
    fn new(s: &mut Scope, cfg: &TransformConfig, dim: usize) -> Result<Self> {
        Ok(match cfg.family {
            TransformFamily::Flawin => {
                FeedForward::Flaff(Flaff::new(&mut s.pp("flaff"), dim, cfg.flaff_hidden(dim))?)
            }
            _ => FeedForward::Mlp(Mlp::new(&mut s.pp("mlp"), dim, cfg.mlp_hidden(dim))?),
        })
    }

    /// `x` is a token map `(B, h, w, C)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            FeedForward::Mlp(m) => m.forward(x),
            FeedForward::Flaff(f) => f.forward(x),
        }
    }
}

/// One transformer block: LN, (S)W-MSA, residual, LN, feed-forward, residual.
#[derive(Debug, Clone)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    /// Cyclic shift applied before windowing; 0 for W-MSA.
    pub shift: usize,
}

impl SwinBlock {
    fn new(
        s: &mut Scope,
        cfg: &TransformConfig,
        dim: usize,
        heads: usize,
        shift: usize,
    ) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(&mut s.pp("norm1"), dim)?,
            attn: WindowAttention::new(&mut s.pp("attn"), dim, heads, cfg.window_size)?,
            norm2: LayerNorm::new(&mut s.pp("norm2"), dim)?,
            ffn: FeedForward::new(s, cfg, dim)?,
            shift,
        })
    }

    /// Shift actually used on an `h x w` map. A map that fits in one window
    /// along either axis gains nothing from shifting, so SW-MSA falls back to
    /// plain W-MSA there.
    pub fn effective_shift(&self, h: usize, w: usize) -> usize {
        let m = self.attn.window;
        if h <= m || w <= m {
            0
        } else {
            self.shift
        }
    }

    /// The attention half of the block without its residual: `(S)W-MSA(LN(x))`.
    pub fn attention_branch(&self, x: &Tensor) -> Result<Tensor> {
        let (_, h, w, _) = x.dims4()?;
        let m = self.attn.window;
        if h % m != 0 || w % m != 0 {
            return Err(invalid!(
                "token map {h}x{w} is not divisible by window size {m}"
            ));
        }
        let normed = self.norm1.forward(x)?;
        let shift = self.effective_shift(h, w);
        if shift == 0 {
            let windows = window_partition(&normed, m)?;
            let out = self.attn.forward(&windows, None)?;
            return window_reverse(&out, m, h, w);
        }
        let s = shift as i32;
        let shifted = normed.roll(-s, 1)?.roll(-s, 2)?;
        let windows = window_partition(&shifted, m)?;
        let mask = shifted_window_mask(h, w, m, shift, x.device())?;
        let out = self.attn.forward(&windows, Some(&mask))?;
        Ok(window_reverse(&out, m, h, w)?.roll(s, 1)?.roll(s, 2)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = (x + self.attention_branch(x)?)?;
        let y = self.ffn.forward(&self.norm2.forward(&x)?)?;
        Ok((x + y)?)
    }
}

/// A W-MSA block followed by an SW-MSA block with shift `floor(M/2)`.
#[derive(Debug, Clone)]
pub struct SwinBlockPair {
    pub regular: SwinBlock,
    pub shifted: SwinBlock,
}

impl SwinBlockPair {
    pub fn new(s: &mut Scope, cfg: &TransformConfig, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            regular: SwinBlock::new(&mut s.pp("wmsa"), cfg, dim, heads, 0)?,
            shifted: SwinBlock::new(&mut s.pp("swmsa"), cfg, dim, heads, cfg.window_size / 2)?,
        })
    }

    pub fn forward(&self, z: &TokenMap) -> Result<TokenMap> {
        let out = self.shifted.forward(&self.regular.forward(&z.data)?)?;
        TokenMap::new(out)
    }
}

/// Concatenates each 2x2 token group (4C) and projects to 2C.
#[derive(Debug, Clone)]
pub struct PatchMerge {
    pub reduction: Linear,
}

impl PatchMerge {
    pub fn new(s: &mut Scope, dim: usize) -> Result<Self> {
        Ok(Self {
            reduction: Linear::new(&mut s.pp("reduction"), 4 * dim, 2 * dim, Init::FanIn)?,
        })
    }

    /// Rearranges `(B, h, w, C)` into `(B, h/2, w/2, 4C)`, taking the group in
    /// `(dy, dx)` row-major order.
    pub fn gather_groups(x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid!("patch merging needs even sides, got {h}x{w}"));
        }
        Ok(x.reshape((b, h / 2, 2, w / 2, 2, c))?
            .permute((0, 1, 3, 2, 4, 5))?
            .reshape((b, h / 2, w / 2, 4 * c))?)
    }

    pub fn forward(&self, map: &TokenMap) -> Result<TokenMap> {
        TokenMap::new(self.reduction.forward(&Self::gather_groups(&map.data)?)?)
    }
}

/// Projects 2C to 4C and scatters the result back into 2x2 token groups.
#[derive(Debug, Clone)]
pub struct PatchSplit {
    pub expansion: Linear,
}

impl PatchSplit {
    pub fn new(s: &mut Scope, dim: usize) -> Result<Self> {
        if dim % 2 != 0 {
            return Err(invalid!("patch splitting needs an even channel count, got {dim}"));
        }
        Ok(Self {
            expansion: Linear::new(&mut s.pp("expansion"), dim, 2 * dim, Init::FanIn)?,
        })
    }

    /// Inverse of [`PatchMerge::gather_groups`].
    pub fn scatter_groups(x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c4) = x.dims4()?;
        if c4 % 4 != 0 {
            return Err(invalid!("cannot split {c4} channels into 2x2 groups"));
        }
        let c = c4 / 4;
        Ok(x.reshape((b, h, w, 2, 2, c))?
            .permute((0, 1, 3, 2, 4, 5))?
            .reshape((b, 2 * h, 2 * w, c))?)
    }

    pub fn forward(&self, map: &TokenMap) -> Result<TokenMap> {
        TokenMap::new(Self::scatter_groups(&self.expansion.forward(&map.data)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub pairs: Vec<SwinBlockPair>,
}

impl Stage {
    fn new(s: &mut Scope, cfg: &TransformConfig, index: usize) -> Result<Self> {
        let dim = cfg.stage_dim(index);
        let pairs = (0..cfg.stage_depths[index] / 2)
            .map(|p| SwinBlockPair::new(&mut s.pp(format!("pair{p}")), cfg, dim, cfg.num_heads[index]))
            .collect::<Result<_>>()?;
        Ok(Self { pairs })
    }

    fn forward(&self, mut z: TokenMap) -> Result<TokenMap> {
        for pair in &self.pairs {
            z = pair.forward(&z)?;
        }
        Ok(z)
    }
}

/// Patchify, linear embedding, block-pair stages separated by patch merging,
/// and a final projection to the latent channels.
#[derive(Debug, Clone)]
pub struct SwinEncoder {
    pub cfg: TransformConfig,
    pub embed: Linear,
    pub stages: Vec<Stage>,
    pub merges: Vec<PatchMerge>,
    pub head: Linear,
}

impl SwinEncoder {
    pub fn new(s: &mut Scope, cfg: &TransformConfig) -> Result<Self> {
        cfg.validate()?;
        let p = cfg.patch_size;
        let embed = Linear::new(&mut s.pp("embed"), p * p * cfg.in_channels, cfg.embed_dim, Init::FanIn)?;
        let mut stages = Vec::new();
        let mut merges = Vec::new();
        for i in 0..cfg.num_stages() {
            stages.push(Stage::new(&mut s.pp(format!("stage{i}")), cfg, i)?);
            if i + 1 < cfg.num_stages() {
                merges.push(PatchMerge::new(&mut s.pp(format!("merge{i}")), cfg.stage_dim(i))?);
            }
        }
        let last = cfg.stage_dim(cfg.num_stages() - 1);
        let head = Linear::new(&mut s.pp("head"), last, cfg.latent_channels, Init::FanIn)?;
        Ok(Self {
            cfg: cfg.clone(),
            embed,
            stages,
            merges,
            head,
        })
    }

    /// `(B, C_in, H, W)` to `(B, latent, H/f, W/f)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        self.cfg.validate_input(h, w)?;
        let patches = patchify(x, self.cfg.patch_size)?;
        let mut z = TokenMap::new(self.embed.forward(&patches.data)?)?;
        for (i, stage) in self.stages.iter().enumerate() {
            z = stage.forward(z)?;
            if let Some(merge) = self.merges.get(i) {
                z = merge.forward(&z)?;
            }
        }
        TokenMap::new(self.head.forward(&z.data)?)?.to_image()
    }
}

/// Mirror of [`SwinEncoder`] using patch splitting and unpatchify.
#[derive(Debug, Clone)]
pub struct SwinDecoder {
    pub cfg: TransformConfig,
    pub head: Linear,
    /// Indexed by encoder stage number.
    pub stages: Vec<Stage>,
    /// `splits[i]` maps stage `i + 1` back to stage `i`.
    pub splits: Vec<PatchSplit>,
    pub deembed: Linear,
}

impl SwinDecoder {
    pub fn new(s: &mut Scope, cfg: &TransformConfig) -> Result<Self> {
        cfg.validate()?;
        let last = cfg.stage_dim(cfg.num_stages() - 1);
        let head = Linear::new(&mut s.pp("head"), cfg.latent_channels, last, Init::FanIn)?;
        let mut stages = Vec::new();
        let mut splits = Vec::new();
        for i in 0..cfg.num_stages() {
            stages.push(Stage::new(&mut s.pp(format!("stage{i}")), cfg, i)?);
            if i + 1 < cfg.num_stages() {
                splits.push(PatchSplit::new(&mut s.pp(format!("split{i}")), cfg.stage_dim(i + 1))?);
            }
        }
        let p = cfg.patch_size;
        let deembed = Linear::new(&mut s.pp("deembed"), cfg.embed_dim, p * p * cfg.out_channels, Init::FanIn)?;
        Ok(Self {
            cfg: cfg.clone(),
            head,
            stages,
            splits,
            deembed,
        })
    }

    /// `(B, latent, h, w)` to `(B, C_out, h*f, w*f)`.
    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = y.dims4()?;
        let f = self.cfg.downsample_factor();
        self.cfg.validate_input(h * f, w * f)?;
        let mut z = TokenMap::new(self.head.forward(&TokenMap::from_image(y)?.data)?)?;
        for i in (0..self.stages.len()).rev() {
            z = self.stages[i].forward(z)?;
            if i > 0 {
                z = self.splits[i - 1].forward(&z)?;
            }
        }
        let out = TokenMap::new(self.deembed.forward(&z.data)?)?;
        unpatchify(&out, self.cfg.patch_size, self.cfg.out_channels)
    }
}
