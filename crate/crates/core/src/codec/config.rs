use serde::{Deserialize, Serialize};

use crate::entropy::GaussianConditional;
use crate::error::{config_err, Result};
use crate::scale_space::ScaleSpaceConfig;
use crate::transforms::{TransformConfig, TransformFamily};

/// Network sizes. `Desk` targets 64x64 crops on a CPU, `Full` 256x256 crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(config_err!("unknown preset `{other}`, expected desk or full")),
        }
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: TransformFamily,
    /// Image channels.
    pub channels: usize,
    pub iframe: TransformConfig,
    /// Consumes `(x_t, x_hat_{t-1})`, emits `(Fx, Fy, scale logit)`.
    pub motion: TransformConfig,
    pub residual: TransformConfig,
    /// Channels of the hyper-latent.
    pub hyper_channels: usize,
    pub scale_space: ScaleSpaceConfig,
    pub gaussian: GaussianConditional,
    pub prior_tail_mass: f64,
    /// Initial bias of the scale-logit output, so early predictions start
    /// close to the sharp reference.
    pub scale_logit_init: f64,
}

impl ModelConfig {
    pub fn new(family: TransformFamily, channels: usize, preset: Preset) -> Self {
        let make = |cin, cout| match preset {
            Preset::Desk => TransformConfig::desk(family, cin, cout),
            Preset::Full => TransformConfig::full(family, cin, cout),
        };
        let iframe = make(channels, channels);
        let hyper_channels = iframe.latent_channels;
        Self {
            family,
            channels,
            motion: make(2 * channels, 3),
            residual: make(channels, channels),
            iframe,
            hyper_channels,
            scale_space: ScaleSpaceConfig::default(),
            gaussian: GaussianConditional::default(),
            prior_tail_mass: 1e-9,
            scale_logit_init: -4.0,
        }
    }

    pub fn desk(family: TransformFamily) -> Self {
        Self::new(family, 1, Preset::Desk)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("iframe", &self.iframe),
            ("motion", &self.motion),
            ("residual", &self.residual),
        ] {
            t.validate()
                .map_err(|e| config_err!("{name} transform: {e}"))?;
            if t.family != self.family {
                return Err(config_err!(
                    "{name} transform family {} differs from model family {}",
                    t.family,
                    self.family
                ));
            }
        }
        let c = self.channels;
        let io = [
            ("iframe", &self.iframe, c, c),
            ("motion", &self.motion, 2 * c, 3),
            ("residual", &self.residual, c, c),
        ];
        for (name, t, cin, cout) in io {
            if t.in_channels != cin || t.out_channels != cout {
                return Err(config_err!(
                    "{name} transform maps {} -> {} channels, expected {cin} -> {cout}",
                    t.in_channels,
                    t.out_channels
                ));
            }
        }
        if self.scale_space.num_scales() == 0 {
            return Err(config_err!("P-frame model needs at least one blur scale"));
        }
        self.scale_space.validate()?;
        if !(self.gaussian.sigma_floor > 0.0) {
            return Err(config_err!("sigma floor must be positive"));
        }
        if self.hyper_channels == 0 {
            return Err(config_err!("hyper_channels must be positive"));
        }
        Ok(())
    }

    /// Frame sides must be multiples of this value.
    pub fn divisibility(&self) -> usize {
        [&self.iframe, &self.motion, &self.residual]
            .iter()
            .map(|t| t.downsample_factor())
            .max()
            .unwrap_or(1)
            * super::net::HYPER_DOWNSAMPLE
    }

    /// Checks that `h x w` frames can pass through every sub-network.
    pub fn validate_frame(&self, h: usize, w: usize) -> Result<()> {
        let d = self.divisibility();
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(crate::error::invalid!(
                "frame {h}x{w} must have both sides divisible by {d}"
            ));
        }
        for t in [&self.iframe, &self.motion, &self.residual] {
            t.validate_input(h, w)?;
        }
        Ok(())
    }
}
