//! One learned transform-coding unit: analysis and synthesis transforms plus
//! a hyperprior that conditions a zero-mean Gaussian on the hyper-latent.

use std::sync::OnceLock;

use candle_core::{DType, Tensor};
use rand::RngCore;

use crate::entropy::{
    quantize_test, quantize_train, rate_bits, to_symbols, CdfTable, FactorizedPrior,
    GaussianConditional, LatentCode, RangeDecoder, RangeEncoder,
};
use crate::error::{invalid, Result};
use crate::nn::{gelu, softplus, Conv2d, ConvTranspose2d, Scope};
use crate::transforms::{
    build_decoder, build_encoder, AnalysisTransform, SynthesisTransform, TransformConfig,
};

/// Spatial reduction from the latent to the hyper-latent.
pub const HYPER_DOWNSAMPLE: usize = 4;

/// Scales of the shared Gaussian coder tables, log-spaced from the floor up.
const SCALE_LEVELS: usize = 64;
const SCALE_MAX: f64 = 256.0;

/// How latents are made discrete.
pub enum Quantizer<'a> {
    /// Additive uniform noise, used while training.
    Noise(&'a mut dyn RngCore),
    /// Rounding, used for evaluation and coding.
    Round,
}

impl Quantizer<'_> {
    fn apply(&mut self, y: &Tensor) -> Result<Tensor> {
        match self {
            Quantizer::Noise(rng) => quantize_train(y, &mut **rng),
            Quantizer::Round => quantize_test(y),
        }
    }
}

/// `|y|` through a 3x3 convolution and two stride-2 5x5 convolutions.
#[derive(Debug, Clone)]
pub struct HyperAnalysis {
    pub layers: [Conv2d; 3],
}

impl HyperAnalysis {
    fn new(s: &mut Scope, latent: usize, hyper: usize) -> Result<Self> {
        Ok(Self {
            layers: [
                Conv2d::new(&mut s.pp("conv0"), latent, hyper, 3, 1, 1)?,
                Conv2d::new(&mut s.pp("conv1"), hyper, hyper, 5, 2, 2)?,
                Conv2d::new(&mut s.pp("conv2"), hyper, hyper, 5, 2, 2)?,
            ],
        })
    }

    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        let h = gelu(&self.layers[0].forward(&y.abs()?)?)?;
        let h = gelu(&self.layers[1].forward(&h)?)?;
        self.layers[2].forward(&h)
    }
}

/// Mirror of [`HyperAnalysis`] ending in a softplus, so scales are positive.
#[derive(Debug, Clone)]
pub struct HyperSynthesis {
    pub up: [ConvTranspose2d; 2],
    pub out: Conv2d,
}

impl HyperSynthesis {
    fn new(s: &mut Scope, hyper: usize, latent: usize) -> Result<Self> {
        Ok(Self {
            up: [
                ConvTranspose2d::new(&mut s.pp("deconv0"), hyper, hyper, 5, 2, 2, 1)?,
                ConvTranspose2d::new(&mut s.pp("deconv1"), hyper, hyper, 5, 2, 2, 1)?,
            ],
            out: Conv2d::new(&mut s.pp("conv"), hyper, latent, 3, 1, 1)?,
        })
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let h = gelu(&self.up[0].forward(z)?)?;
        let h = gelu(&self.up[1].forward(&h)?)?;
        softplus(&self.out.forward(&h)?)
    }
}

/// Result of running a [`CompressionNet`] in either quantization mode.
#[derive(Debug, Clone)]
pub struct NetOutput {
    /// Synthesis output before any clamping.
    pub x_hat: Tensor,
    /// Bits for the latent under the conditional Gaussian.
    pub rate_y: Tensor,
    /// Bits for the hyper-latent under the factorized prior.
    pub rate_z: Tensor,
    pub y_hat: Tensor,
    pub z_hat: Tensor,
}

impl NetOutput {
    pub fn rate(&self) -> Result<Tensor> {
        Ok((&self.rate_y + &self.rate_z)?)
    }
}

/// Output of [`CompressionNet::encode`].
#[derive(Debug, Clone)]
pub struct Encoded {
    pub payload: Vec<u8>,
    pub x_hat: Tensor,
    pub code: LatentCode,
}

#[derive(Debug, Clone)]
pub struct CompressionNet {
    pub g_a: AnalysisTransform,
    pub g_s: SynthesisTransform,
    pub h_a: HyperAnalysis,
    pub h_s: HyperSynthesis,
    pub prior: FactorizedPrior,
    pub gaussian: GaussianConditional,
    pub transform: TransformConfig,
    pub hyper_channels: usize,
    scale_tables: OnceLock<(Vec<f64>, Vec<CdfTable>)>,
}

impl CompressionNet {
    pub fn new(
        s: &mut Scope,
        transform: &TransformConfig,
        hyper_channels: usize,
        gaussian: GaussianConditional,
        tail_mass: f64,
    ) -> Result<Self> {
        let latent = transform.latent_channels;
        Ok(Self {
            g_a: build_encoder(&mut s.pp("g_a"), transform)?,
            g_s: build_decoder(&mut s.pp("g_s"), transform)?,
            h_a: HyperAnalysis::new(&mut s.pp("h_a"), latent, hyper_channels)?,
            h_s: HyperSynthesis::new(&mut s.pp("h_s"), hyper_channels, latent)?,
            prior: FactorizedPrior::new(&mut s.pp("prior"), hyper_channels, tail_mass)?,
            gaussian,
            transform: transform.clone(),
            hyper_channels,
            scale_tables: OnceLock::new(),
        })
    }

    /// Latent and hyper-latent shapes `(C, h, w)` for an `h x w` input.
    pub fn latent_dims(&self, h: usize, w: usize) -> ([usize; 3], [usize; 3]) {
        let f = self.transform.downsample_factor();
        let (hy, wy) = (h / f, w / f);
        (
            [self.transform.latent_channels, hy, wy],
            [self.hyper_channels, hy / HYPER_DOWNSAMPLE, wy / HYPER_DOWNSAMPLE],
        )
    }

    /// Gaussian scales predicted from a quantized hyper-latent.
    pub fn sigma(&self, z_hat: &Tensor) -> Result<Tensor> {
        self.h_s.forward(z_hat)
    }

    pub fn synthesize(&self, y_hat: &Tensor) -> Result<Tensor> {
        self.g_s.forward(y_hat)
    }

    /// Full analysis/quantization/synthesis pass with rate terms.
    pub fn forward(&self, x: &Tensor, q: &mut Quantizer) -> Result<NetOutput> {
        let y = self.g_a.forward(x)?;
        let z = self.h_a.forward(&y)?;
        let z_hat = q.apply(&z)?;
        let rate_z = rate_bits(&self.prior.likelihood(&z_hat)?)?;
        let sigma = self.sigma(&z_hat)?;
        let y_hat = q.apply(&y)?;
        let rate_y = rate_bits(&self.gaussian.likelihood(&y_hat, &sigma)?)?;
        let x_hat = self.synthesize(&y_hat)?;
        Ok(NetOutput {
            x_hat,
            rate_y,
            rate_z,
            y_hat,
            z_hat,
        })
    }

    fn scale_tables(&self) -> Result<&(Vec<f64>, Vec<CdfTable>)> {
        if let Some(t) = self.scale_tables.get() {
            return Ok(t);
        }
        let lo = self.gaussian.sigma_floor;
        let step = (SCALE_MAX / lo).ln() / (SCALE_LEVELS - 1) as f64;
        let scales: Vec<f64> = (0..SCALE_LEVELS)
            .map(|i| (lo.ln() + step * i as f64).exp())
            .collect();
        let tables = scales
            .iter()
            .map(|&s| self.gaussian.build_table(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.scale_tables.get_or_init(|| (scales, tables)))
    }

    /// Index of the smallest table scale not below each `sigma`.
    fn scale_indices(&self, sigma: &Tensor, scales: &[f64]) -> Result<Vec<usize>> {
        let sigma = sigma.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        Ok(sigma
            .into_iter()
            .map(|s| {
                let s = s.max(self.gaussian.sigma_floor);
                scales.partition_point(|&t| t < s).min(scales.len() - 1)
            })
            .collect())
    }

    fn symbols_to_tensor(&self, symbols: &[i32], dims: [usize; 3], like: &Tensor) -> Result<Tensor> {
        let values: Vec<f32> = symbols.iter().map(|&v| v as f32).collect();
        Ok(Tensor::from_vec(values, (1, dims[0], dims[1], dims[2]), like.device())?
            .to_dtype(like.dtype())?)
    }

    /// Entropy-codes a single frame `(1, C, H, W)`. The returned
    /// reconstruction is computed from the integer symbols exactly as
    /// [`decode`](Self::decode) computes it.
    pub fn encode(&self, x: &Tensor) -> Result<Encoded> {
        let (b, _, h, w) = x.dims4()?;
        if b != 1 {
            return Err(invalid!("entropy coding works on one frame at a time, got batch {b}"));
        }
        let (y_dims, z_dims) = self.latent_dims(h, w);
        let y = self.g_a.forward(x)?;
        let z = self.h_a.forward(&y)?;
        let z_syms = to_symbols(&z)?;
        let y_syms = to_symbols(&y)?;

        let prior_tables = self.prior.snapshot()?.build_tables()?;
        let (scales, gauss_tables) = self.scale_tables()?;
        let mut enc = RangeEncoder::new();
        let per_channel = z_dims[1] * z_dims[2];
        for (i, &v) in z_syms.iter().enumerate() {
            enc.encode(v, &prior_tables[i / per_channel]);
        }
        let z_hat = self.symbols_to_tensor(&z_syms, z_dims, x)?;
        let idx = self.scale_indices(&self.sigma(&z_hat)?, scales)?;
        for (&v, &k) in y_syms.iter().zip(&idx) {
            enc.encode(v, &gauss_tables[k]);
        }
        let payload = enc.finish();
        let y_hat = self.symbols_to_tensor(&y_syms, y_dims, x)?;
        let x_hat = self.synthesize(&y_hat)?;
        Ok(Encoded {
            payload,
            x_hat,
            code: LatentCode {
                y_hat: y_syms,
                y_shape: y_dims.to_vec(),
                z_hat: z_syms,
                z_shape: z_dims.to_vec(),
            },
        })
    }

    /// Inverse of [`encode`](Self::encode) for an `h x w` frame. `like`
    /// supplies dtype and device.
    pub fn decode(&self, payload: &[u8], h: usize, w: usize, like: &Tensor) -> Result<Tensor> {
        let (y_dims, z_dims) = self.latent_dims(h, w);
        let prior_tables = self.prior.snapshot()?.build_tables()?;
        let (scales, gauss_tables) = self.scale_tables()?;
        let mut dec = RangeDecoder::new(payload)?;
        let per_channel = z_dims[1] * z_dims[2];
        let nz: usize = z_dims.iter().product();
        let z_syms = (0..nz)
            .map(|i| dec.decode(&prior_tables[i / per_channel]))
            .collect::<Result<Vec<_>>>()?;
        let z_hat = self.symbols_to_tensor(&z_syms, z_dims, like)?;
        let idx = self.scale_indices(&self.sigma(&z_hat)?, scales)?;
        let y_syms = idx
            .iter()
            .map(|&k| dec.decode(&gauss_tables[k]))
            .collect::<Result<Vec<_>>>()?;
        dec.finish()?;
        let y_hat = self.symbols_to_tensor(&y_syms, y_dims, like)?;
        self.synthesize(&y_hat)
    }
}
