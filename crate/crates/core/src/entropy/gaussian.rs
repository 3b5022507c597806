//! Zero-mean Gaussian conditional model for the main latent.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::cdf::{CdfTable, MAX_SUPPORT};
use super::rate::LIKELIHOOD_FLOOR;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianConditional {
    /// Lower clamp on every scale.
    pub sigma_floor: f64,
    /// Probability mass left outside the coder table support.
    pub tail_mass: f64,
}

impl Default for GaussianConditional {
    fn default() -> Self {
        Self {
            sigma_floor: 0.11,
            tail_mass: 1e-9,
        }
    }
}

/// Upper tail `P(X > x)` of the standard normal.
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

impl GaussianConditional {
    /// Mass of the unit bin centred on `v` under `N(0, sigma^2)`.
    ///
    /// Evaluated on `|v|` through upper tails so small masses keep their
    /// relative precision.
    pub fn bin_mass(&self, v: f64, sigma: f64) -> f64 {
        let s = sigma.max(self.sigma_floor);
        let a = v.abs();
        upper_tail((a - 0.5) / s) - upper_tail((a + 0.5) / s)
    }

    /// Differentiable bin likelihood `Phi((v+1/2)/s) - Phi((v-1/2)/s)` with
    /// `s = max(sigma, sigma_floor)`, floored at [`LIKELIHOOD_FLOOR`].
    pub fn likelihood(&self, values: &Tensor, sigma: &Tensor) -> Result<Tensor> {
        let s = sigma.maximum(self.sigma_floor)?;
        let a = values.abs()?;
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let upper = (a.affine(-1.0, 0.5)? / &s)?.affine(scale, 0.0)?.erf()?;
        let lower = (a.affine(-1.0, -0.5)? / &s)?.affine(scale, 0.0)?.erf()?;
        let p = ((upper - lower)? * 0.5)?;
        Ok(p.maximum(LIKELIHOOD_FLOOR)?)
    }

    /// Half-width `N` of the support `[-N, N]` kept in a coder table.
    pub fn support_half_width(&self, sigma: f64) -> usize {
        let s = sigma.max(self.sigma_floor);
        let max_half = (MAX_SUPPORT - 1) / 2;
        // smallest N whose two tails beyond N + 1/2 hold at most tail_mass
        let outside = |n: usize| 2.0 * upper_tail((n as f64 + 0.5) / s);
        let z = Normal::standard().inverse_cdf(1.0 - self.tail_mass / 2.0);
        let mut n = ((s * z - 0.5).ceil().max(0.0) as usize).min(max_half);
        while n < max_half && outside(n) > self.tail_mass {
            n += 1;
        }
        while n > 0 && outside(n - 1) <= self.tail_mass {
            n -= 1;
        }
        n
    }

    pub fn build_table(&self, sigma: f64) -> Result<CdfTable> {
        let n = self.support_half_width(sigma) as i32;
        let pmf: Vec<f64> = (-n..=n).map(|v| self.bin_mass(v as f64, sigma)).collect();
        CdfTable::from_pmf(&pmf, -n)
    }
}
