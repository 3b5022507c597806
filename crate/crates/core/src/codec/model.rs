use candle_core::{DType, Tensor};

use super::config::ModelConfig;
use super::net::{CompressionNet, NetOutput, Quantizer};
use crate::error::{config_err, invalid, Result};
use crate::nn::{clamp_straight_through, ParamStore};
use crate::scale_space::{build_volume, warp, FlowField, ScaleSpaceConfig};
use crate::transforms::TransformFamily;

/// Intra-frame coder.
#[derive(Debug, Clone)]
pub struct IFrameModel {
    pub net: CompressionNet,
}

/// Motion and residual coders plus the scale-space used for compensation.
#[derive(Debug, Clone)]
pub struct PFrameModel {
    pub motion: CompressionNet,
    pub residual: CompressionNet,
    pub scale_space: ScaleSpaceConfig,
}

#[derive(Debug, Clone)]
pub struct IFrameOutput {
    /// Reconstruction clamped to `[0, 1]`.
    pub x_hat: Tensor,
    pub rate: Tensor,
    pub net: NetOutput,
}

#[derive(Debug, Clone)]
pub struct MotionOutput {
    pub flow: FlowField,
    pub rate: Tensor,
    /// Quantized motion latent.
    pub w_hat: Tensor,
}

#[derive(Debug, Clone)]
pub struct PFrameOutput {
    /// Reconstruction clamped to `[0, 1]`.
    pub x_hat: Tensor,
    /// Motion-compensated prediction.
    pub prediction: Tensor,
    /// Decoded residual.
    pub residual: Tensor,
    pub flow: FlowField,
    pub rate_motion: Tensor,
    pub rate_residual: Tensor,
}

impl PFrameOutput {
    pub fn rate(&self) -> Result<Tensor> {
        Ok((&self.rate_motion + &self.rate_residual)?)
    }
}

fn clamp_unit(x: &Tensor) -> Result<Tensor> {
    clamp_straight_through(x, 0.0, 1.0)
}

impl IFrameModel {
    pub fn code(&self, x: &Tensor, q: &mut Quantizer) -> Result<IFrameOutput> {
        let net = self.net.forward(x, q)?;
        Ok(IFrameOutput {
            x_hat: clamp_unit(&net.x_hat)?,
            rate: net.rate()?,
            net,
        })
    }

    /// Entropy-codes one frame, returning the payload and the reconstruction
    /// the decoder will produce.
    pub fn encode(&self, x: &Tensor) -> Result<(Vec<u8>, Tensor)> {
        let e = self.net.encode(x)?;
        Ok((e.payload, clamp_unit(&e.x_hat)?))
    }

    pub fn decode(&self, payload: &[u8], h: usize, w: usize, like: &Tensor) -> Result<Tensor> {
        clamp_unit(&self.net.decode(payload, h, w, like)?)
    }
}

impl PFrameModel {
    /// Maps the motion decoder's three channels to a flow field with
    /// `Fz = M * sigmoid(raw)`.
    pub fn flow_from_raw(&self, raw: &Tensor) -> Result<FlowField> {
        let mut flow = FlowField::from_channels(raw)?;
        let m = self.scale_space.num_scales() as f64;
        flow.fz = (candle_nn::ops::sigmoid(&flow.fz)? * m)?;
        Ok(flow)
    }

    /// Warps the scale-space volume of `reference` with `flow`.
    pub fn predict(&self, reference: &Tensor, flow: &FlowField) -> Result<Tensor> {
        warp(&build_volume(reference, &self.scale_space)?, flow)
    }

    pub fn motion_estimate_code(
        &self,
        x: &Tensor,
        reference: &Tensor,
        q: &mut Quantizer,
    ) -> Result<MotionOutput> {
        if x.dims() != reference.dims() {
            return Err(invalid!(
                "current frame {:?} and reference {:?} differ in shape",
                x.dims(),
                reference.dims()
            ));
        }
        let net = self.motion.forward(&Tensor::cat(&[x, reference], 1)?, q)?;
        Ok(MotionOutput {
            flow: self.flow_from_raw(&net.x_hat)?,
            rate: net.rate()?,
            w_hat: net.y_hat,
        })
    }

    pub fn code(&self, x: &Tensor, reference: &Tensor, q: &mut Quantizer) -> Result<PFrameOutput> {
        let motion = self.motion_estimate_code(x, reference, q)?;
        let prediction = self.predict(reference, &motion.flow)?;
        let res = self.residual.forward(&(x - &prediction)?, q)?;
        let x_hat = clamp_unit(&(&prediction + &res.x_hat)?)?;
        Ok(PFrameOutput {
            x_hat,
            prediction,
            residual: res.x_hat.clone(),
            flow: motion.flow,
            rate_motion: motion.rate,
            rate_residual: res.rate()?,
        })
    }

    /// Entropy-codes one frame against `reference`, returning the motion and
    /// residual payloads and the decoder-side reconstruction.
    pub fn encode(&self, x: &Tensor, reference: &Tensor) -> Result<(Vec<u8>, Vec<u8>, Tensor)> {
        let motion = self.motion.encode(&Tensor::cat(&[x, reference], 1)?)?;
        let prediction = self.predict(reference, &self.flow_from_raw(&motion.x_hat)?)?;
        let residual = self.residual.encode(&(x - &prediction)?)?;
        let x_hat = clamp_unit(&(&prediction + &residual.x_hat)?)?;
        Ok((motion.payload, residual.payload, x_hat))
    }

    pub fn decode(&self, motion: &[u8], residual: &[u8], reference: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = reference.dims4()?;
        let raw = self.motion.decode(motion, h, w, reference)?;
        let prediction = self.predict(reference, &self.flow_from_raw(&raw)?)?;
        let r_hat = self.residual.decode(residual, h, w, reference)?;
        clamp_unit(&(&prediction + &r_hat)?)
    }
}

/// The complete codec: parameters, I-frame model and P-frame model.
pub struct SsfModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub iframe: IFrameModel,
    pub pframe: PFrameModel,
}

impl std::fmt::Debug for SsfModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SsfModel")
            .field("family", &self.config.family)
            .field("parameters", &self.store.num_scalars())
            .finish()
    }
}

impl SsfModel {
    /// Builds a freshly initialized model; identical `(config, seed)` pairs
    /// give bitwise-identical parameters.
    pub fn new(config: ModelConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(seed, dtype);
        let (iframe, pframe) = {
            let mut root = store.root();
            let net = |s: &mut crate::nn::Scope, t| {
                CompressionNet::new(
                    s,
                    t,
                    config.hyper_channels,
                    config.gaussian,
                    config.prior_tail_mass,
                )
            };
            let iframe = IFrameModel {
                net: net(&mut root.pp("iframe"), &config.iframe)?,
            };
            let mut p = root.pp("pframe");
            let pframe = PFrameModel {
                motion: net(&mut p.pp("motion"), &config.motion)?,
                residual: net(&mut p.pp("residual"), &config.residual)?,
                scale_space: config.scale_space.clone(),
            };
            (iframe, pframe)
        };
        init_scale_logit(&store, &config)?;
        Ok(Self {
            config,
            store,
            iframe,
            pframe,
        })
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn code_iframe(&self, x: &Tensor, q: &mut Quantizer) -> Result<IFrameOutput> {
        self.iframe.code(x, q)
    }

    pub fn motion_estimate_code(
        &self,
        x: &Tensor,
        reference: &Tensor,
        q: &mut Quantizer,
    ) -> Result<MotionOutput> {
        self.pframe.motion_estimate_code(x, reference, q)
    }

    pub fn code_pframe(&self, x: &Tensor, reference: &Tensor, q: &mut Quantizer) -> Result<PFrameOutput> {
        self.pframe.code(x, reference, q)
    }
}

/// Sets the output bias of the scale-logit channel of the motion decoder.
fn init_scale_logit(store: &ParamStore, config: &ModelConfig) -> Result<()> {
    let t = &config.motion;
    let name = match t.family {
        TransformFamily::Conv => {
            let n = t.downsample_factor().trailing_zeros();
            format!("pframe.motion.g_s.deconv{}.bias", n - 1)
        }
        _ => "pframe.motion.g_s.deembed.bias".to_string(),
    };
    let var = store
        .get(&name)
        .ok_or_else(|| config_err!("motion decoder has no output bias `{name}`"))?;
    let values: Vec<f64> = (0..var.elem_count())
        .map(|i| if i % 3 == 2 { config.scale_logit_init } else { 0.0 })
        .collect();
    var.set(&Tensor::from_vec(values, var.shape(), var.device())?.to_dtype(var.dtype())?)?;
    Ok(())
}
