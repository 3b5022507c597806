//! Python bindings: frames, the codec model, training, and the entropy coder.

use candle_core::{DType, Device, Tensor};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use ssf_codec::codec::{compress_gop, decompress_gop, GopPlan, ModelConfig, SsfModel};
use ssf_codec::data::{self, SequenceDataset};
use ssf_codec::entropy::{estimate_bits, range_decode, range_encode, CdfTable};
use ssf_codec::scale_space::{build_volume, warp, FlowField, ScaleSpaceConfig};
use ssf_codec::training::{self, TrainConfig, TrainOutputs};
use ssf_codec::transforms::TransformFamily;
use ssf_codec::{checkpoint, metrics, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidArgument(_) | Error::Config(_) | Error::Data(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn tensor_err(e: candle_core::Error) -> PyErr {
    to_py(e.into())
}

/// One frame, channel-major then row-major, values in `[0, 1]`.
#[pyclass(name = "Frame", from_py_object)]
#[derive(Clone)]
pub struct PyFrame {
    pub inner: data::Frame,
}

#[pymethods]
impl PyFrame {
    #[new]
    fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> PyResult<Self> {
        let inner = data::Frame::new(channels, height, width, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// `(channels, height, width)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.channels, self.inner.height, self.inner.width)
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn psnr(&self, other: &PyFrame) -> PyResult<f64> {
        metrics::psnr(&self.inner, &other.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Frame({}, {}, {})", self.inner.channels, self.inner.height, self.inner.width)
    }
}

fn frames_of(frames: &[PyFrame]) -> Vec<data::Frame> {
    frames.iter().map(|f| f.inner.clone()).collect()
}

fn wrap(frames: Vec<data::Frame>) -> Vec<PyFrame> {
    frames.into_iter().map(|inner| PyFrame { inner }).collect()
}

/// Scale-space flow codec with desk-sized transforms.
#[pyclass(name = "Model", unsendable)]
pub struct PyModel {
    pub inner: SsfModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (family = "conv", seed = 0))]
    fn new(family: &str, seed: u64) -> PyResult<Self> {
        let family: TransformFamily = family.parse().map_err(to_py)?;
        let inner = SsfModel::new(ModelConfig::desk(family), seed, DType::F32).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, _) = checkpoint::load(path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save(&self.inner, &Default::default(), path).map_err(to_py)
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.config.family.to_string()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.store.num_scalars()
    }

    /// Hex digest of the parameters, as stored in stream headers.
    fn digest(&self) -> PyResult<String> {
        let d = self.inner.digest().map_err(to_py)?;
        Ok(d.iter().map(|b| format!("{b:02x}")).collect())
    }

    #[pyo3(signature = (frames, gop = 30))]
    fn compress<'py>(&self, py: Python<'py>, frames: Vec<PyFrame>, gop: usize) -> PyResult<Bound<'py, PyBytes>> {
        let plan = GopPlan::new(gop).map_err(to_py)?;
        let c = compress_gop(&frames_of(&frames), &self.inner, &plan).map_err(to_py)?;
        Ok(PyBytes::new(py, &c.bytes))
    }

    fn decompress(&self, data: &[u8]) -> PyResult<Vec<PyFrame>> {
        Ok(wrap(decompress_gop(data, &self.inner).map_err(to_py)?))
    }
}

#[pyfunction]
#[pyo3(signature = (n_frames, size = 64, seed = 0))]
fn gen_synthetic(n_frames: usize, size: usize, seed: u64) -> PyResult<Vec<PyFrame>> {
    Ok(wrap(data::gen_synthetic(n_frames, size, seed).map_err(to_py)?.frames))
}

#[pyfunction]
fn bpp(stream_bytes: usize, frames: usize, height: usize, width: usize) -> f64 {
    metrics::bpp(stream_bytes, frames, height, width, true)
}

/// Trains a desk-preset model and returns it with the per-step losses.
#[pyfunction]
#[pyo3(signature = (frames, family = "conv", steps = 10, lmbda = 0.01, seed = 0))]
fn train(frames: Vec<PyFrame>, family: &str, steps: usize, lmbda: f64, seed: u64) -> PyResult<(PyModel, Vec<f64>)> {
    let cfg = TrainConfig {
        family: family.parse().map_err(to_py)?,
        steps,
        lambda: lmbda,
        seed,
        ..TrainConfig::desk()
    };
    let data = SequenceDataset::from_frames(frames_of(&frames), data::ChunkMode::Train).map_err(to_py)?;
    let out = training::train(&data, &cfg, &TrainOutputs::default()).map_err(to_py)?;
    let losses = out.log.iter().map(|r| r.loss).collect();
    Ok((PyModel { inner: out.model }, losses))
}

/// Warps `frame` by a flow given as three `height * width` planes `(fx, fy, fz)`.
#[pyfunction]
fn warp_frame(frame: &PyFrame, fx: Vec<f32>, fy: Vec<f32>, fz: Vec<f32>) -> PyResult<PyFrame> {
    let f = &frame.inner;
    let dev = Device::Cpu;
    let x = f.to_tensor(&dev).map_err(to_py)?.unsqueeze(0).map_err(tensor_err)?;
    let plane = |v: Vec<f32>| Tensor::from_vec(v, (1, f.height, f.width), &dev).map_err(tensor_err);
    let flow = FlowField::from_channels(&Tensor::stack(&[plane(fx)?, plane(fy)?, plane(fz)?], 1).map_err(tensor_err)?)
        .map_err(to_py)?;
    let v = build_volume(&x, &ScaleSpaceConfig::default()).map_err(to_py)?;
    let out = warp(&v, &flow).map_err(to_py)?.squeeze(0).map_err(tensor_err)?;
    Ok(PyFrame {
        inner: data::Frame::from_tensor(&out).map_err(to_py)?,
    })
}

/// Range-codes `symbols` with one table built from `pmf` over `offset..offset+len(pmf)`.
/// Values outside the table are escaped.
#[pyfunction]
fn range_encode_pmf<'py>(py: Python<'py>, symbols: Vec<i32>, pmf: Vec<f64>, offset: i32) -> PyResult<Bound<'py, PyBytes>> {
    let t = CdfTable::from_pmf(&pmf, offset).map_err(to_py)?;
    Ok(PyBytes::new(py, &range_encode(&symbols, &[&t]).map_err(to_py)?))
}

#[pyfunction]
fn range_decode_pmf(data: &[u8], pmf: Vec<f64>, offset: i32, count: usize) -> PyResult<Vec<i32>> {
    let t = CdfTable::from_pmf(&pmf, offset).map_err(to_py)?;
    range_decode(data, &[&t], count).map_err(to_py)
}

/// Ideal code length in bits under the quantized table.
#[pyfunction]
fn estimate_bits_pmf(symbols: Vec<i32>, pmf: Vec<f64>, offset: i32) -> PyResult<f64> {
    let t = CdfTable::from_pmf(&pmf, offset).map_err(to_py)?;
    Ok(estimate_bits(&symbols, &[&t]))
}

#[pymodule]
fn ssf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(bpp, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(warp_frame, m)?)?;
    m.add_function(wrap_pyfunction!(range_encode_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(range_decode_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_bits_pmf, m)?)?;
    Ok(())
}
