use std::path::{Path, PathBuf};

use super::{train, TrainConfig, TrainOutputs};
use crate::checkpoint;
use crate::data::SequenceDataset;
use crate::error::{invalid, Result};
use crate::eval::{emit_rd_curve, eval_model, EvalOptions, RdPoint};

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub lambda: f64,
    pub checkpoint: PathBuf,
    pub point: RdPoint,
    /// True when an existing checkpoint was reused instead of retrained.
    pub reused: bool,
}

fn checkpoint_path(dir: &Path, lambda: f64) -> PathBuf {
    dir.join(format!("lambda_{lambda}.safetensors"))
}

/// Trains one model per lambda from scratch (reusing any finished checkpoint
/// in `out_dir` with the same lambda and model configuration), evaluates each
/// on `eval_data`, and writes `rd.csv`, `rd.json` and `rd.svg` to `out_dir`.
pub fn sweep(
    train_data: &SequenceDataset,
    eval_data: &SequenceDataset,
    base: &TrainConfig,
    lambdas: &[f64],
    eval: &EvalOptions,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<SweepEntry>> {
    let out_dir = out_dir.as_ref();
    if lambdas.is_empty() {
        return Err(invalid!("the lambda list is empty"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| crate::Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = TrainConfig {
            lambda,
            ..base.clone()
        };
        cfg.validate()?;
        let path = checkpoint_path(out_dir, lambda);
        let existing = if path.exists() {
            match checkpoint::load(&path) {
                Ok((m, rec)) if rec.lambda == Some(lambda) && m.config == cfg.model_config() => Some(m),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("ignoring unreadable checkpoint {}: {e}", path.display());
                    None
                }
            }
        } else {
            None
        };
        let reused = existing.is_some();
        let model = match existing {
            Some(m) => {
                log::info!("lambda {lambda}: reusing {}", path.display());
                m
            }
            None => {
                log::info!("lambda {lambda}: training");
                let outputs = TrainOutputs {
                    checkpoint: Some(path.clone()),
                    log_csv: Some(out_dir.join(format!("lambda_{lambda}.log.csv"))),
                };
                train(train_data, &cfg, &outputs)?.model
            }
        };
        let opts = EvalOptions {
            lambda,
            ..eval.clone()
        };
        let point = eval_model(&model, eval_data, &opts)?.point;
        entries.push(SweepEntry {
            lambda,
            checkpoint: path,
            point,
            reused,
        });
    }
    let points: Vec<RdPoint> = entries.iter().map(|e| e.point.clone()).collect();
    emit_rd_curve(&points, out_dir.join("rd"))?;
    Ok(entries)
}
