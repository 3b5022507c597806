use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{ModelConfig, Preset};
use crate::error::{config_err, Error, Result};
use crate::transforms::TransformFamily;

/// Lagrange multipliers of the standard rate-distortion sweep.
pub const SWEEP_LAMBDAS: [f64; 9] = [0.00125, 0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.160, 0.320];

/// Training hyperparameters. The flat `key = value` config file uses exactly
/// these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Optimizer steps; `0` derives the count from `epochs`.
    pub steps: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub seed: u64,
    pub chunk_length: usize,
    pub family: TransformFamily,
    pub preset: Preset,
    /// Global gradient-norm limit; `0` disables clipping.
    pub grad_clip: f64,
}

impl TrainConfig {
    /// Full-scale settings: 100 epochs, batch 16, 256x256 crops.
    pub fn full() -> Self {
        Self {
            lambda: 0.01,
            epochs: 100,
            steps: 0,
            batch_size: 16,
            crop: 256,
            lr_initial: 1e-4,
            lr_final: 1.2e-6,
            seed: 0,
            chunk_length: 4,
            family: TransformFamily::Flawin,
            preset: Preset::Full,
            grad_clip: 1.0,
        }
    }

    /// CPU-sized settings: batch 8, 64x64 crops, desk networks.
    pub fn desk() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            crop: 64,
            preset: Preset::Desk,
            ..Self::full()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.family, 1, self.preset)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config_err!("lambda must be positive, got {}", self.lambda));
        }
        if self.batch_size == 0 || self.chunk_length == 0 {
            return Err(config_err!("batch_size and chunk_length must be at least 1"));
        }
        if self.steps == 0 && self.epochs == 0 {
            return Err(config_err!("either steps or epochs must be positive"));
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(config_err!(
                "learning rates must satisfy 0 < lr_final <= lr_initial, got {} and {}",
                self.lr_final,
                self.lr_initial
            ));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(config_err!("grad_clip must be non-negative"));
        }
        let d = self.model_config().divisibility();
        if self.crop == 0 || self.crop % d != 0 {
            return Err(config_err!(
                "crop {} must be a positive multiple of the model's downsampling {d}",
                self.crop
            ));
        }
        Ok(())
    }

    /// Learning rate at `step` of `total`: cosine decay between the endpoints.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.lr_initial;
        }
        let p = step.min(total - 1) as f64 / (total - 1) as f64;
        self.lr_final + 0.5 * (self.lr_initial - self.lr_final) * (1.0 + (std::f64::consts::PI * p).cos())
    }

    /// Steps for a dataset of `frames` frames.
    pub fn total_steps(&self, frames: usize) -> usize {
        if self.steps > 0 {
            return self.steps;
        }
        let per_epoch = frames.div_ceil(self.chunk_length * self.batch_size).max(1);
        self.epochs * per_epoch
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| config_err!("cannot parse `{v}` as the value of `{key}`"))
        }
        match key {
            "lambda" => self.lambda = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "crop" => self.crop = parse(key, value)?,
            "lr_initial" => self.lr_initial = parse(key, value)?,
            "lr_final" => self.lr_final = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "chunk_length" => self.chunk_length = parse(key, value)?,
            "family" => self.family = value.parse()?,
            "preset" => self.preset = value.parse()?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            other => return Err(config_err!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Parses a config file. `preset` is applied first when present, so the
    /// other keys override its defaults regardless of order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected `key = value`, got `{raw}`", n + 1))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) if v.parse::<Preset>()? == Preset::Full => Self::full(),
            _ => Self::desk(),
        };
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| config_err!("{}: {e}", path.display()))
    }

    /// Serializes back to the config-file format.
    pub fn to_text(&self) -> String {
        let preset = match self.preset {
            Preset::Desk => "desk",
            Preset::Full => "full",
        };
        format!(
            "preset = {preset}\nfamily = {}\nlambda = {}\nepochs = {}\nsteps = {}\nbatch_size = {}\ncrop = {}\n\
             lr_initial = {}\nlr_final = {}\nseed = {}\nchunk_length = {}\ngrad_clip = {}\n",
            self.family,
            self.lambda,
            self.epochs,
            self.steps,
            self.batch_size,
            self.crop,
            self.lr_initial,
            self.lr_final,
            self.seed,
            self.chunk_length,
            self.grad_clip
        )
    }
}
