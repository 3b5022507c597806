//! Model checkpoints as safetensors files.
//!
//! The metadata block carries the format version, the model configuration as
//! JSON and an optional training record. Tensors are stored under their
//! parameter names in the model's dtype, so a save/load cycle is bit-exact.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::tensor::{Dtype as StDtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{ModelConfig, SsfModel, DIGEST_LEN};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "1";

const KEY_VERSION: &str = "format_version";
const KEY_CONFIG: &str = "model_config";
const KEY_TRAINING: &str = "training";

/// How a checkpoint was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub lambda: Option<f64>,
    pub steps: usize,
    pub seed: u64,
    pub final_loss: Option<f64>,
}

fn ckpt_err(msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(msg.to_string())
}

fn to_st_dtype(d: DType) -> Result<StDtype> {
    match d {
        DType::F32 => Ok(StDtype::F32),
        DType::F64 => Ok(StDtype::F64),
        other => Err(ckpt_err(format!("unsupported parameter dtype {other:?}"))),
    }
}

fn from_st_dtype(d: StDtype) -> Result<DType> {
    match d {
        StDtype::F32 => Ok(DType::F32),
        StDtype::F64 => Ok(DType::F64),
        other => Err(ckpt_err(format!("unsupported tensor dtype {other:?} in checkpoint"))),
    }
}

/// Little-endian raw bytes of a parameter.
fn raw_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let t = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F32 => t.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        DType::F64 => t.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        other => return Err(ckpt_err(format!("unsupported parameter dtype {other:?}"))),
    })
}

impl SsfModel {
    /// First 16 bytes of SHA-256 over the configuration and every parameter
    /// (name, dtype, shape, raw bytes) in name order.
    pub fn digest(&self) -> Result<[u8; DIGEST_LEN]> {
        let mut h = Sha256::new();
        h.update(CHECKPOINT_VERSION.as_bytes());
        h.update(serde_json::to_vec(&self.config).map_err(ckpt_err)?);
        for (name, var) in self.store.iter() {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update(format!("{:?}", var.dtype()).as_bytes());
            for d in var.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            h.update(raw_bytes(var.as_tensor())?);
        }
        Ok(h.finalize()[..DIGEST_LEN].try_into().unwrap())
    }
}

pub fn save(model: &SsfModel, record: &TrainingRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dtype = to_st_dtype(model.dtype())?;
    let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = model
        .store
        .iter()
        .map(|(n, v)| Ok((n.to_string(), v.dims().to_vec(), raw_bytes(v.as_tensor())?)))
        .collect::<Result<_>>()?;
    let views = buffers
        .iter()
        .map(|(n, shape, bytes)| {
            TensorView::new(dtype, shape.clone(), bytes)
                .map(|v| (n.clone(), v))
                .map_err(ckpt_err)
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = HashMap::from([
        (KEY_VERSION.to_string(), CHECKPOINT_VERSION.to_string()),
        (
            KEY_CONFIG.to_string(),
            serde_json::to_string(&model.config).map_err(ckpt_err)?,
        ),
        (
            KEY_TRAINING.to_string(),
            serde_json::to_string(record).map_err(ckpt_err)?,
        ),
    ]);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    safetensors::serialize_to_file(views, Some(metadata), path).map_err(ckpt_err)
}

pub fn load(path: impl AsRef<Path>) -> Result<(SsfModel, TrainingRecord)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => ckpt_err(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn from_bytes(bytes: &[u8]) -> Result<(SsfModel, TrainingRecord)> {
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(ckpt_err)?;
    let meta = meta
        .metadata()
        .as_ref()
        .ok_or_else(|| ckpt_err("missing metadata block"))?;
    let get = |k: &str| meta.get(k).ok_or_else(|| ckpt_err(format!("metadata lacks `{k}`")));
    let version = get(KEY_VERSION)?;
    if version != CHECKPOINT_VERSION {
        return Err(ckpt_err(format!(
            "format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config: ModelConfig = serde_json::from_str(get(KEY_CONFIG)?).map_err(ckpt_err)?;
    let record: TrainingRecord = match meta.get(KEY_TRAINING) {
        Some(s) => serde_json::from_str(s).map_err(ckpt_err)?,
        None => TrainingRecord::default(),
    };

    let st = SafeTensors::deserialize(bytes).map_err(ckpt_err)?;
    let mut values = BTreeMap::new();
    let mut dtype = None;
    for (name, view) in st.tensors() {
        let d = from_st_dtype(view.dtype())?;
        if dtype.replace(d).is_some_and(|prev| prev != d) {
            return Err(ckpt_err("parameters have mixed dtypes"));
        }
        let t = Tensor::from_raw_buffer(view.data(), d, view.shape(), &Device::Cpu)?;
        values.insert(name, t);
    }
    let model = SsfModel::new(config, 0, dtype.unwrap_or(DType::F32))?;
    model.store.load(&values).map_err(|e| ckpt_err(e.to_string()))?;
    Ok((model, record))
}
