//! Non-parametric, fully factorized density for the hyper-latent.
//!
//! Each channel owns a small monotone network mapping a real value to the
//! logit of its cumulative distribution. Matrices pass through softplus and
//! the gating factors through tanh, which keeps the composite non-decreasing.

use candle_core::{DType, Tensor};

use super::cdf::{CdfTable, MAX_SUPPORT};
use super::rate::LIKELIHOOD_FLOOR;
use crate::error::{invalid, Result};
use crate::nn::{softplus, Scope};

/// Widths of the per-channel network, input to output.
const WIDTHS: [usize; 5] = [1, 3, 3, 3, 1];
const INIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FactorizedPrior {
    pub channels: usize,
    /// Per stage `(C, out, in)` pre-softplus matrices.
    pub matrices: Vec<Tensor>,
    /// Per stage `(C, out, 1)`.
    pub biases: Vec<Tensor>,
    /// Per non-final stage `(C, out, 1)` pre-tanh gates.
    pub factors: Vec<Tensor>,
    pub tail_mass: f64,
}

fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

impl FactorizedPrior {
    pub fn new(s: &mut Scope, channels: usize, tail_mass: f64) -> Result<Self> {
        let stages = WIDTHS.len() - 1;
        let scale = INIT_SCALE.powf(1.0 / stages as f64);
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for k in 0..stages {
            let (fin, fout) = (WIDTHS[k], WIDTHS[k + 1]);
            let init = (1.0 / scale / fout as f64).exp_m1().ln();
            matrices.push(s.constant(&format!("matrix{k}"), (channels, fout, fin), init)?);
            biases.push(s.uniform(&format!("bias{k}"), (channels, fout, 1), -0.5, 0.5)?);
            if k + 1 < stages {
                factors.push(s.constant(&format!("factor{k}"), (channels, fout, 1), 0.0)?);
            }
        }
        Ok(Self {
            channels,
            matrices,
            biases,
            factors,
            tail_mass,
        })
    }

    /// CDF logits for `x` of shape `(C, 1, N)`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for k in 0..self.matrices.len() {
            h = softplus(&self.matrices[k])?
                .matmul(&h)?
                .broadcast_add(&self.biases[k])?;
            if let Some(f) = self.factors.get(k) {
                h = (&h + f.tanh()?.broadcast_mul(&h.tanh()?)?)?;
            }
        }
        Ok(h)
    }

    /// Cumulative distribution `c(x)` for `x` of shape `(C, 1, N)`.
    pub fn cdf(&self, x: &Tensor) -> Result<Tensor> {
        sigmoid(&self.logits(x)?)
    }

    /// `c(z + 1/2) - c(z - 1/2)` per element of `z` shaped `(B, C, h, w)`,
    /// floored at [`LIKELIHOOD_FLOOR`].
    pub fn likelihood(&self, z: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = z.dims4()?;
        if c != self.channels {
            return Err(invalid!("prior has {} channels, input has {c}", self.channels));
        }
        let x = z.permute((1, 0, 2, 3))?.reshape((c, 1, b * h * w))?;
        let lower = self.logits(&x.affine(1.0, -0.5)?)?;
        let upper = self.logits(&x.affine(1.0, 0.5)?)?;
        // evaluate on the side of the median where sigmoid does not saturate
        let sign = (&lower + &upper)?
            .detach()
            .ge(0.0)?
            .to_dtype(z.dtype())?
            .affine(-2.0, 1.0)?;
        let p = (sigmoid(&(&sign * &upper)?)? - sigmoid(&(&sign * &lower)?)?)?.abs()?;
        let p = p.maximum(LIKELIHOOD_FLOOR)?;
        Ok(p.reshape((c, b, h, w))?.permute((1, 0, 2, 3))?.contiguous()?)
    }

    /// Frozen double-precision copy for building coder tables.
    pub fn snapshot(&self) -> Result<PriorSnapshot> {
        let read = |t: &Tensor| -> Result<Vec<f64>> {
            Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
        };
        let matrices = self
            .matrices
            .iter()
            .map(|m| Ok(read(&softplus(m)?)?))
            .collect::<Result<Vec<_>>>()?;
        let biases = self.biases.iter().map(read).collect::<Result<Vec<_>>>()?;
        let factors = self
            .factors
            .iter()
            .map(|f| read(&f.tanh()?))
            .collect::<Result<Vec<_>>>()?;
        Ok(PriorSnapshot {
            channels: self.channels,
            matrices,
            biases,
            factors,
            tail_mass: self.tail_mass,
        })
    }
}

/// Evaluated prior parameters (post-softplus matrices, post-tanh factors).
#[derive(Debug, Clone)]
pub struct PriorSnapshot {
    channels: usize,
    matrices: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    factors: Vec<Vec<f64>>,
    tail_mass: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PriorSnapshot {
    pub fn logit(&self, channel: usize, x: f64) -> f64 {
        let mut h = vec![x];
        for k in 0..self.matrices.len() {
            let (fin, fout) = (WIDTHS[k], WIDTHS[k + 1]);
            let m = &self.matrices[k][channel * fout * fin..(channel + 1) * fout * fin];
            let b = &self.biases[k][channel * fout..(channel + 1) * fout];
            let mut next: Vec<f64> = (0..fout)
                .map(|o| (0..fin).map(|i| m[o * fin + i] * h[i]).sum::<f64>() + b[o])
                .collect();
            if let Some(f) = self.factors.get(k) {
                let f = &f[channel * fout..(channel + 1) * fout];
                for (v, g) in next.iter_mut().zip(f) {
                    *v += g * v.tanh();
                }
            }
            h = next;
        }
        h[0]
    }

    pub fn cdf(&self, channel: usize, x: f64) -> f64 {
        logistic(self.logit(channel, x))
    }

    /// Mass of the unit bin centred on `n`.
    pub fn bin_mass(&self, channel: usize, n: f64) -> f64 {
        let lo = self.logit(channel, n - 0.5);
        let hi = self.logit(channel, n + 0.5);
        let s = if lo + hi >= 0.0 { -1.0 } else { 1.0 };
        (logistic(s * hi) - logistic(s * lo)).abs()
    }

    /// Coder table for `channel`: the integer support is grown outward from
    /// zero until each tail beyond it holds at most half the tail mass.
    pub fn build_table(&self, channel: usize) -> Result<CdfTable> {
        let limit = (MAX_SUPPORT as i32 - 1) / 2;
        let half_tail = self.tail_mass / 2.0;
        let mut lo = 0i32;
        while lo > -limit && self.cdf(channel, lo as f64 - 0.5) > half_tail {
            lo -= 1;
        }
        let mut hi = 0i32;
        while hi < limit && 1.0 - self.cdf(channel, hi as f64 + 0.5) > half_tail {
            hi += 1;
        }
        let pmf: Vec<f64> = (lo..=hi).map(|n| self.bin_mass(channel, n as f64)).collect();
        CdfTable::from_pmf(&pmf, lo)
    }

    pub fn build_tables(&self) -> Result<Vec<CdfTable>> {
        (0..self.channels).map(|c| self.build_table(c)).collect()
    }
}
