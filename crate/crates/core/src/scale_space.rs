//! Scale-space volumes and trilinear scale-space warping.
//!
//! A volume stacks the reference frame with progressively Gaussian-blurred
//! copies of itself. Warping samples that volume at a displaced spatial
//! position and a fractional blur level, so a single flow field can both
//! move content and smooth regions where motion is unreliable.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpaceConfig {
    /// Blur standard deviations in pixels, strictly increasing.
    pub scales: Vec<f64>,
    /// Kernel half-width is `ceil(kernel_truncation * s)` pixels.
    pub kernel_truncation: f64,
}

impl Default for ScaleSpaceConfig {
    fn default() -> Self {
        Self {
            scales: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            kernel_truncation: 3.0,
        }
    }
}

impl ScaleSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_truncation > 0.0 && self.kernel_truncation.is_finite()) {
            return Err(invalid!(
                "kernel truncation must be positive, got {}",
                self.kernel_truncation
            ));
        }
        for (i, &s) in self.scales.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid!("scale {i} must be positive, got {s}"));
            }
            if i > 0 && s <= self.scales[i - 1] {
                return Err(invalid!("scales must be strictly increasing at index {i}"));
            }
        }
        Ok(())
    }

    /// Number of blurred slices `M`; the volume holds `M + 1` slices.
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }
}

/// Normalized 1-D sampled Gaussian of odd length `2 * ceil(truncation * s) + 1`.
pub fn gaussian_kernel_1d(s: f64, truncation: f64) -> Result<Vec<f64>> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid!("gaussian scale must be positive, got {s}"));
    }
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(invalid!("kernel truncation must be positive, got {truncation}"));
    }
    let half = (truncation * s).ceil() as i64;
    let raw: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * s * s)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Square 2-D Gaussian kernel, row-major, side `2 * ceil(truncation * s) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    pub side: usize,
    pub data: Vec<f64>,
}

impl Kernel2d {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.side + col]
    }
}

pub fn gaussian_kernel(s: f64, truncation: f64) -> Result<Kernel2d> {
    let k1 = gaussian_kernel_1d(s, truncation)?;
    let side = k1.len();
    let data = k1
        .iter()
        .flat_map(|&a| k1.iter().map(move |&b| a * b))
        .collect();
    Ok(Kernel2d { side, data })
}

/// `n x n` matrix applying a 1-D kernel with edge-replicating padding.
fn blur_matrix(kernel: &[f64], n: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let half = (kernel.len() / 2) as i64;
    let mut m = vec![0f64; n * n];
    for i in 0..n as i64 {
        for (k, &w) in kernel.iter().enumerate() {
            let j = (i + k as i64 - half).clamp(0, n as i64 - 1);
            m[i as usize * n + j as usize] += w;
        }
    }
    Ok(Tensor::from_vec(m, (n, n), device)?.to_dtype(dtype)?)
}

/// Separable Gaussian blur of a `(B, C, H, W)` tensor with replicate padding.
pub fn gaussian_blur(x: &Tensor, s: f64, truncation: f64) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let k = gaussian_kernel_1d(s, truncation)?;
    let mw = blur_matrix(&k, w, x.dtype(), x.device())?;
    let mh = blur_matrix(&k, h, x.dtype(), x.device())?;
    let rows = x.reshape((b * c * h, w))?.matmul(&mw.t()?)?;
    let cols = rows
        .reshape((b * c, h, w))?
        .transpose(1, 2)?
        .reshape((b * c * w, h))?
        .matmul(&mh.t()?)?;
    Ok(cols.reshape((b * c, w, h))?.transpose(1, 2)?.reshape((b, c, h, w))?)
}

#[derive(Debug, Clone)]
pub struct ScaleSpaceVolume {
    /// `(B, M + 1, C, H, W)`.
    pub data: Tensor,
    pub config: ScaleSpaceConfig,
}

impl ScaleSpaceVolume {
    pub fn num_slices(&self) -> usize {
        self.data.dims()[1]
    }

    /// Slice `i` as a `(B, C, H, W)` tensor.
    pub fn slice(&self, i: usize) -> Result<Tensor> {
        Ok(self.data.narrow(1, i, 1)?.squeeze(1)?)
    }
}

/// Stacks `frame` (shape `(B, C, H, W)`) with its blurred copies.
pub fn build_volume(frame: &Tensor, cfg: &ScaleSpaceConfig) -> Result<ScaleSpaceVolume> {
    cfg.validate()?;
    frame.dims4()?;
    let mut slices = Vec::with_capacity(cfg.scales.len() + 1);
    slices.push(frame.clone());
    for &s in &cfg.scales {
        slices.push(gaussian_blur(frame, s, cfg.kernel_truncation)?);
    }
    Ok(ScaleSpaceVolume {
        data: Tensor::stack(&slices, 1)?,
        config: cfg.clone(),
    })
}

/// Per-pixel displacement and scale coordinate, each `(B, H, W)`.
#[derive(Debug, Clone)]
pub struct FlowField {
    /// Horizontal displacement in pixels.
    pub fx: Tensor,
    /// Vertical displacement in pixels.
    pub fy: Tensor,
    /// Fractional slice index in `[0, M]`.
    pub fz: Tensor,
}

impl FlowField {
    pub fn zeros(b: usize, h: usize, w: usize, dtype: DType, device: &Device) -> Result<Self> {
        let z = Tensor::zeros((b, h, w), dtype, device)?;
        Ok(Self {
            fx: z.clone(),
            fy: z.clone(),
            fz: z,
        })
    }

    /// Splits a `(B, 3, H, W)` tensor into its three channels.
    pub fn from_channels(t: &Tensor) -> Result<Self> {
        let (_, c, _, _) = t.dims4()?;
        if c != 3 {
            return Err(invalid!("flow tensor must have 3 channels, got {c}"));
        }
        Ok(Self {
            fx: t.narrow(1, 0, 1)?.squeeze(1)?,
            fy: t.narrow(1, 1, 1)?.squeeze(1)?,
            fz: t.narrow(1, 2, 1)?.squeeze(1)?,
        })
    }

    pub fn to_channels(&self) -> Result<Tensor> {
        Ok(Tensor::stack(&[&self.fx, &self.fy, &self.fz], 1)?)
    }

    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        Ok(self.fx.dims3()?)
    }
}

/// Trilinear sample of `volume` at `(x + fx, y + fy, fz)` for every pixel.
///
/// Spatial coordinates outside the frame are clamped to the edge and `fz` is
/// clamped to `[0, M]`. The result is differentiable with respect to the
/// volume and all three flow channels.
pub fn warp(volume: &ScaleSpaceVolume, flow: &FlowField) -> Result<Tensor> {
    let (b, s, c, h, w) = volume.data.dims5()?;
    for (name, t) in [("fx", &flow.fx), ("fy", &flow.fy), ("fz", &flow.fz)] {
        if t.dims() != [b, h, w] {
            return Err(invalid!(
                "flow channel {name} has shape {:?}, expected {:?}",
                t.dims(),
                [b, h, w]
            ));
        }
    }
    let dtype = volume.data.dtype();
    let device = volume.data.device();
    let max_z = (s - 1) as f64;

    let xs = Tensor::arange(0u32, w as u32, device)?
        .to_dtype(dtype)?
        .reshape((1, 1, w))?;
    let ys = Tensor::arange(0u32, h as u32, device)?
        .to_dtype(dtype)?
        .reshape((1, h, 1))?;
    let px = flow.fx.broadcast_add(&xs)?;
    let py = flow.fy.broadcast_add(&ys)?;
    let pz = flow.fz.clamp(0.0, max_z)?;

    let x0 = px.detach().floor()?;
    let y0 = py.detach().floor()?;
    let z0 = pz.detach().floor()?;
    let tx = (&px - &x0)?;
    let ty = (&py - &y0)?;
    let tz = (&pz - &z0)?;

    // Integer corner coordinates, clamped; computed in f64 to keep indices exact.
    let corner = |t: &Tensor, offset: f64, hi: f64| -> Result<Tensor> {
        Ok(t.to_dtype(DType::F64)?.affine(1.0, offset)?.clamp(0.0, hi)?)
    };
    let xi = [corner(&x0, 0.0, (w - 1) as f64)?, corner(&x0, 1.0, (w - 1) as f64)?];
    let yi = [corner(&y0, 0.0, (h - 1) as f64)?, corner(&y0, 1.0, (h - 1) as f64)?];
    let zi = [corner(&z0, 0.0, max_z)?, corner(&z0, 1.0, max_z)?];

    let one_minus = |t: &Tensor| -> Result<Tensor> { Ok(t.affine(-1.0, 1.0)?) };
    let wx = [one_minus(&tx)?, tx];
    let wy = [one_minus(&ty)?, ty];
    let wz = [one_minus(&tz)?, tz];

    let flat = volume
        .data
        .permute((0, 2, 1, 3, 4))?
        .reshape((b, c, s * h * w))?;
    let plane = (h * w) as f64;
    let mut out: Option<Tensor> = None;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let index = ((zi[dz].affine(plane, 0.0)? + yi[dy].affine(w as f64, 0.0)?)?
                    + &xi[dx])?
                    .to_dtype(DType::U32)?
                    .reshape((b, 1, h * w))?
                    .broadcast_as((b, c, h * w))?
                    .contiguous()?;
                let sampled = flat.gather(&index, 2)?;
                let weight = ((&wz[dz] * &wy[dy])? * &wx[dx])?.reshape((b, 1, h * w))?;
                let term = sampled.broadcast_mul(&weight)?;
                out = Some(match out {
                    None => term,
                    Some(acc) => (acc + term)?,
                });
            }
        }
    }
    Ok(out.unwrap().reshape((b, c, h, w))?)
}
