//! Window multi-head self-attention with a learnable relative position bias.

use candle_core::{Device, Tensor};

use crate::error::{config_err, invalid, Result};
use crate::nn::{Init, Linear, Scope};

/// Maps every token pair `(i, j)` of an `M x M` window to the index of its
/// spatial offset in the flattened `(2M-1) x (2M-1)` bias table.
pub fn relative_position_index(window: usize) -> Vec<u32> {
    let n = window * window;
    let span = 2 * window - 1;
    let mut idx = Vec::with_capacity(n * n);
    for i in 0..n {
        let (ri, ci) = (i / window, i % window);
        for j in 0..n {
            let (rj, cj) = (j / window, j % window);
            let dr = ri + window - 1 - rj;
            let dc = ci + window - 1 - cj;
            idx.push((dr * span + dc) as u32);
        }
    }
    idx
}

/// Additive SW-MSA mask of shape `(nW, N, N)` for an `h x w` map cyclically
/// shifted by `shift`: zero between tokens from the same pre-shift region,
/// negative infinity otherwise.
pub fn shifted_window_mask(
    h: usize,
    w: usize,
    window: usize,
    shift: usize,
    device: &Device,
) -> Result<Tensor> {
    let bounds = |len: usize| [(0, len - window), (len - window, len - shift), (len - shift, len)];
    let mut label = vec![0u32; h * w];
    let mut cnt = 0;
    for (r0, r1) in bounds(h) {
        for (c0, c1) in bounds(w) {
            for r in r0..r1 {
                for c in c0..c1 {
                    label[r * w + c] = cnt;
                }
            }
            cnt += 1;
        }
    }
    let n = window * window;
    let (nh, nw) = (h / window, w / window);
    let mut mask = Vec::with_capacity(nh * nw * n * n);
    for wr in 0..nh {
        for wc in 0..nw {
            let at = |k: usize| label[(wr * window + k / window) * w + wc * window + k % window];
            for i in 0..n {
                for j in 0..n {
                    mask.push(if at(i) == at(j) { 0f32 } else { f32::NEG_INFINITY });
                }
            }
        }
    }
    Ok(Tensor::from_vec(mask, (nh * nw, n, n), device)?)
}

#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    /// `(K, (2M-1)^2)`, one bias table per head.
    pub bias_table: Tensor,
    rel_index: Tensor,
    pub num_heads: usize,
    pub window: usize,
}

impl WindowAttention {
    pub fn new(s: &mut Scope, dim: usize, num_heads: usize, window: usize) -> Result<Self> {
        if num_heads == 0 || dim % num_heads != 0 {
            return Err(config_err!(
                "attention dim {dim} is not divisible by {num_heads} heads"
            ));
        }
        let qkv = Linear::new(&mut s.pp("qkv"), dim, 3 * dim, Init::Normal(0.02))?;
        let proj = Linear::new(&mut s.pp("proj"), dim, dim, Init::Normal(0.02))?;
        let span = 2 * window - 1;
        let bias_table = s.normal("bias_table", (num_heads, span * span), 0.02)?;
        let rel_index = Tensor::new(relative_position_index(window).as_slice(), s.device())?;
        Ok(Self {
            qkv,
            proj,
            bias_table,
            rel_index,
            num_heads,
            window,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.qkv.in_dim() / self.num_heads
    }

    /// The full `(K, N, N)` bias `B` gathered from the table.
    pub fn position_bias(&self) -> Result<Tensor> {
        let n = self.window * self.window;
        Ok(self
            .bias_table
            .index_select(&self.rel_index, 1)?
            .reshape((self.num_heads, n, n))?)
    }

    /// Attention over `(Bw, N, C)` windows. `mask`, if given, is `(nW, N, N)`
    /// and `Bw` must be a multiple of `nW`.
    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (bw, n, c) = x.dims3()?;
        if n != self.window * self.window {
            return Err(invalid!(
                "window holds {n} tokens, expected {}",
                self.window * self.window
            ));
        }
        if c != self.qkv.in_dim() {
            return Err(config_err!(
                "token width {c} does not match attention dim {}",
                self.qkv.in_dim()
            ));
        }
        let k_heads = self.num_heads;
        let d = c / k_heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((bw, n, 3, k_heads, d))?
            .permute((2, 0, 3, 1, 4))?
            .contiguous()?;
        let q = (qkv.get(0)? * (1.0 / (d as f64).sqrt()))?;
        let k = qkv.get(1)?;
        let v = qkv.get(2)?;
        let mut scores = q
            .matmul(&k.transpose(2, 3)?.contiguous()?)?
            .broadcast_add(&self.position_bias()?)?;
        if let Some(mask) = mask {
            let nw = mask.dims3()?.0;
            if bw % nw != 0 {
                return Err(invalid!("{bw} windows cannot be split into groups of {nw}"));
            }
            scores = scores
                .reshape((bw / nw, nw, k_heads, n, n))?
                .broadcast_add(&mask.to_dtype(x.dtype())?.reshape((1, nw, 1, n, n))?)?
                .reshape((bw, k_heads, n, n))?;
        }
        let attn = candle_nn::ops::softmax(&scores, candle_core::D::Minus1)?;
        let out = attn
            .matmul(&v)?
            .transpose(1, 2)?
            .reshape((bw, n, c))?;
        self.proj.forward(&out)
    }
}
