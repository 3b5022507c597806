use candle_core::Tensor;

use crate::error::{invalid, Result};

/// Tokens laid out as a 2-D grid: tensor `(B, h, w, C)`.
///
/// The flat `(B, h*w, C)` view and the grid view are related by a plain
/// reshape, so converting between them is lossless.
#[derive(Debug, Clone)]
pub struct TokenMap {
    pub data: Tensor,
}

impl TokenMap {
    pub fn new(data: Tensor) -> Result<Self> {
        data.dims4()?;
        Ok(Self { data })
    }

    pub fn from_tokens(tokens: &Tensor, h: usize, w: usize) -> Result<Self> {
        let (b, n, c) = tokens.dims3()?;
        if n != h * w {
            return Err(invalid!("{n} tokens cannot form a {h}x{w} map"));
        }
        Ok(Self {
            data: tokens.reshape((b, h, w, c))?,
        })
    }

    /// `(B, h*w, C)` view, row-major over the grid.
    pub fn tokens(&self) -> Result<Tensor> {
        let (b, h, w, c) = self.data.dims4()?;
        Ok(self.data.reshape((b, h * w, c))?)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dims4().expect("token map is rank 4")
    }

    pub fn channels(&self) -> usize {
        self.dims().3
    }

    /// Channels-first image view `(B, C, h, w)`.
    pub fn to_image(&self) -> Result<Tensor> {
        Ok(self.data.permute((0, 3, 1, 2))?.contiguous()?)
    }

    pub fn from_image(x: &Tensor) -> Result<Self> {
        x.dims4()?;
        Ok(Self {
            data: x.permute((0, 2, 3, 1))?.contiguous()?,
        })
    }
}

/// Splits `(B, C, H, W)` into non-overlapping `p x p` patches.
///
/// Each token is the flattened patch in `(row, col, channel)` order, and
/// tokens are arranged row-major over the patch grid.
pub fn patchify(frame: &Tensor, patch: usize) -> Result<TokenMap> {
    let (b, c, h, w) = frame.dims4()?;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(invalid!(
            "frame {h}x{w} must have both sides divisible by patch size {patch}"
        ));
    }
    let (gh, gw) = (h / patch, w / patch);
    let data = frame
        .reshape((b, c, gh, patch, gw, patch))?
        .permute((0, 2, 4, 3, 5, 1))?
        .reshape((b, gh, gw, patch * patch * c))?;
    Ok(TokenMap { data })
}

/// Inverse of [`patchify`] for `channels`-channel patches.
pub fn unpatchify(map: &TokenMap, patch: usize, channels: usize) -> Result<Tensor> {
    let (b, gh, gw, d) = map.dims();
    if patch == 0 || d != patch * patch * channels {
        return Err(invalid!(
            "token width {d} does not match patch {patch} with {channels} channels"
        ));
    }
    Ok(map
        .data
        .reshape((b, gh, gw, patch, patch, channels))?
        .permute((0, 5, 1, 3, 2, 4))?
        .reshape((b, channels, gh * patch, gw * patch))?)
}

/// `(B, h, w, C)` into `(B * nW, M*M, C)` windows, row-major over windows.
pub fn window_partition(x: &Tensor, window: usize) -> Result<Tensor> {
    let (b, h, w, c) = x.dims4()?;
    if h % window != 0 || w % window != 0 {
        return Err(invalid!(
            "token map {h}x{w} is not divisible by window size {window}"
        ));
    }
    Ok(x.reshape((b, h / window, window, w / window, window, c))?
        .permute((0, 1, 3, 2, 4, 5))?
        .reshape((b * (h / window) * (w / window), window * window, c))?)
}

pub fn window_reverse(windows: &Tensor, window: usize, h: usize, w: usize) -> Result<Tensor> {
    let (bw, n, c) = windows.dims3()?;
    let nw = (h / window) * (w / window);
    if n != window * window || bw % nw != 0 {
        return Err(invalid!("window tensor {:?} does not tile {h}x{w}", windows.dims()));
    }
    let b = bw / nw;
    Ok(windows
        .reshape((b, h / window, w / window, window, window, c))?
        .permute((0, 1, 3, 2, 4, 5))?
        .reshape((b, h, w, c))?)
}
