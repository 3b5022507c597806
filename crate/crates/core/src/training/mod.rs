//! Rate-distortion objective, the optimization loop and lambda sweeps.

mod config;
mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{backprop::GradStore, DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{TrainConfig, SWEEP_LAMBDAS};
pub use sweep::{sweep, SweepEntry};

use crate::checkpoint::{self, TrainingRecord};
use crate::codec::{Quantizer, SsfModel};
use crate::data::SequenceDataset;
use crate::error::{invalid, Error, Result};

/// The three terms of `loss = D + lambda * R`.
#[derive(Debug, Clone)]
pub struct RdTerms {
    pub loss: Tensor,
    /// Sum over frames of the per-frame mean squared error.
    pub distortion: Tensor,
    /// Sum over frames of bits per pixel.
    pub rate: Tensor,
}

impl RdTerms {
    pub fn values(&self) -> Result<(f64, f64, f64)> {
        let f = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
        Ok((f(&self.loss)?, f(&self.distortion)?, f(&self.rate)?))
    }
}

/// Rate-distortion loss of a chunk `(T, B, C, H, W)`: frame 0 is intra-coded,
/// every later frame is predicted from the previous reconstruction.
pub fn rd_loss(chunk: &Tensor, model: &SsfModel, lambda: f64, q: &mut Quantizer) -> Result<RdTerms> {
    let (t, b, _, h, w) = chunk.dims5()?;
    if t == 0 {
        return Err(invalid!("a chunk needs at least one frame"));
    }
    if lambda < 0.0 {
        return Err(invalid!("lambda must be non-negative, got {lambda}"));
    }
    let pixels = (b * h * w) as f64;
    let chunk = chunk.to_dtype(model.dtype())?;
    let x0 = chunk.get(0)?;
    let intra = model.code_iframe(&x0, q)?;
    let mut distortion = (&intra.x_hat - &x0)?.sqr()?.mean_all()?;
    let mut rate = (intra.rate / pixels)?;
    let mut reference = intra.x_hat;
    for k in 1..t {
        let x = chunk.get(k)?;
        let p = model.code_pframe(&x, &reference, q)?;
        distortion = (distortion + (&p.x_hat - &x)?.sqr()?.mean_all()?)?;
        rate = (rate + (p.rate()? / pixels)?)?;
        reference = p.x_hat;
    }
    let loss = (&distortion + (&rate * lambda)?)?;
    Ok(RdTerms {
        loss,
        distortion,
        rate,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub distortion: f64,
    pub rate: f64,
    pub lr: f64,
    pub wall_time: f64,
}

pub const LOG_HEADER: &str = "step,loss,D,R,lr,wall_time";

impl LogRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.step, self.loss, self.distortion, self.rate, self.lr, self.wall_time
        )
    }
}

fn grad_norm(vars: &[Var], grads: &GradStore) -> Result<f64> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
        }
    }
    Ok(sq.sqrt())
}

/// Stateful optimizer loop over one model.
pub struct Trainer {
    pub model: SsfModel,
    pub cfg: TrainConfig,
    opt: AdamW,
    vars: Vec<Var>,
    rng: ChaCha8Rng,
    step: usize,
    total: usize,
    start: Instant,
    pub log: Vec<LogRecord>,
    /// Where to dump the model when a non-finite loss appears.
    pub snapshot_path: Option<PathBuf>,
}

impl Trainer {
    /// `total_steps` fixes the learning-rate schedule length.
    pub fn new(model: SsfModel, cfg: TrainConfig, total_steps: usize) -> Result<Self> {
        cfg.validate()?;
        let vars = model.store.vars();
        let opt = AdamW::new(
            vars.clone(),
            ParamsAdamW {
                lr: cfg.lr_initial,
                weight_decay: 0.0,
                ..ParamsAdamW::default()
            },
        )?;
        // the data/noise stream is distinct from the initialization stream
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
        Ok(Self {
            model,
            cfg,
            opt,
            vars,
            rng,
            step: 0,
            total: total_steps.max(1),
            start: Instant::now(),
            log: Vec::new(),
            snapshot_path: None,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    fn abort(&self, message: String) -> Error {
        let mut message = message;
        if let Some(p) = &self.snapshot_path {
            let rec = TrainingRecord {
                lambda: Some(self.cfg.lambda),
                steps: self.step,
                seed: self.cfg.seed,
                final_loss: None,
            };
            match checkpoint::save(&self.model, &rec, p) {
                Ok(()) => message.push_str(&format!("; snapshot written to {}", p.display())),
                Err(e) => message.push_str(&format!("; snapshot failed: {e}")),
            }
        }
        Error::NonFinite {
            step: self.step,
            message,
        }
    }

    /// Draws a batch from `data` and takes one optimizer step.
    pub fn step(&mut self, data: &SequenceDataset) -> Result<LogRecord> {
        let batch = data.sample_batch(
            &mut self.rng,
            self.cfg.batch_size,
            self.cfg.chunk_length,
            self.cfg.crop,
        )?;
        self.step_on(&batch)
    }

    /// One optimizer step on an explicit `(T, B, C, H, W)` batch.
    pub fn step_on(&mut self, batch: &Tensor) -> Result<LogRecord> {
        let lr = self.cfg.lr_at(self.step, self.total);
        self.opt.set_learning_rate(lr);
        let terms = rd_loss(batch, &self.model, self.cfg.lambda, &mut Quantizer::Noise(&mut self.rng))?;
        let (loss, d, r) = terms.values()?;
        if !loss.is_finite() {
            return Err(self.abort(format!("loss {loss} (D {d}, R {r}, lr {lr})")));
        }
        let mut grads = terms.loss.backward()?;
        let norm = grad_norm(&self.vars, &grads)?;
        if !norm.is_finite() {
            return Err(self.abort(format!("gradient norm {norm} at loss {loss}")));
        }
        if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip {
            let scale = self.cfg.grad_clip / norm;
            for v in &self.vars {
                if let Some(g) = grads.remove(v.as_tensor()) {
                    grads.insert(v.as_tensor(), (g * scale)?);
                }
            }
        }
        self.opt.step(&grads)?;
        let rec = LogRecord {
            step: self.step,
            loss,
            distortion: d,
            rate: r,
            lr,
            wall_time: self.start.elapsed().as_secs_f64(),
        };
        self.step += 1;
        self.log.push(rec.clone());
        Ok(rec)
    }

    pub fn record(&self) -> TrainingRecord {
        TrainingRecord {
            lambda: Some(self.cfg.lambda),
            steps: self.step,
            seed: self.cfg.seed,
            final_loss: self.log.last().map(|r| r.loss),
        }
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub model: SsfModel,
    pub log: Vec<LogRecord>,
    pub record: TrainingRecord,
}

/// Output locations for [`train`]; all optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub checkpoint: Option<PathBuf>,
    /// Append-only CSV log.
    pub log_csv: Option<PathBuf>,
}

fn open_log(path: &Path) -> Result<std::fs::File> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{LOG_HEADER}").map_err(|e| Error::io(path, e))?;
    }
    Ok(f)
}

/// Trains a freshly initialized model end to end.
pub fn train(data: &SequenceDataset, cfg: &TrainConfig, out: &TrainOutputs) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = SsfModel::new(cfg.model_config(), cfg.seed, DType::F32)?;
    let total = cfg.total_steps(data.len());
    let mut trainer = Trainer::new(model, cfg.clone(), total)?;
    trainer.snapshot_path = out
        .checkpoint
        .as_ref()
        .map(|p| p.with_extension("nonfinite.safetensors"));
    let mut log_file = out.log_csv.as_deref().map(open_log).transpose()?;
    for _ in 0..total {
        let rec = trainer.step(data)?;
        if let (Some(f), Some(p)) = (log_file.as_mut(), out.log_csv.as_ref()) {
            writeln!(f, "{}", rec.csv_line()).map_err(|e| Error::io(p, e))?;
        }
        if rec.step % 50 == 0 || rec.step + 1 == total {
            log::info!(
                "step {}/{total} loss {:.5} D {:.5} R {:.4} lr {:.2e}",
                rec.step,
                rec.loss,
                rec.distortion,
                rec.rate,
                rec.lr
            );
        }
    }
    let record = trainer.record();
    if let Some(p) = &out.checkpoint {
        checkpoint::save(&trainer.model, &record, p)?;
    }
    Ok(TrainOutcome {
        model: trainer.model,
        log: trainer.log,
        record,
    })
}

/// Names of parameters whose gradient is identically zero (or absent) for
/// the loss on `batch`.
pub fn dead_parameters(model: &SsfModel, batch: &Tensor, lambda: f64, seed: u64) -> Result<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = rd_loss(batch, model, lambda, &mut Quantizer::Noise(&mut rng))?;
    let grads = terms.loss.backward()?;
    let mut dead = Vec::new();
    for (name, var) in model.store.iter() {
        let alive = match grads.get(var.as_tensor()) {
            Some(g) => g.abs()?.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()? > 0.0,
            None => false,
        };
        if !alive {
            dead.push(name.to_string());
        }
    }
    Ok(dead)
}
