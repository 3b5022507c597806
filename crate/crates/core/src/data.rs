//! Frame sequences: loading from disk, synthetic generation and chunking.

use std::ops::Range;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{data_err, invalid, Error, Result};

/// Frame length of a training chunk.
pub const TRAIN_CHUNK: usize = 4;
/// Frame length of a test clip.
pub const TEST_CLIP: usize = 30;

/// A `channels x height x width` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-major, then row-major.
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(invalid!(
                "{} values for a {channels}x{height}x{width} frame",
                data.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `(C, H, W)` f32 tensor.
    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_slice(
            &self.data,
            (self.channels, self.height, self.width),
            device,
        )?)
    }

    /// Reads a `(C, H, W)` tensor of any float dtype.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        Self::new(c, h, w, data)
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width {
            return Err(invalid!(
                "crop {h}x{w} at ({top}, {left}) exceeds frame {}x{}",
                self.height,
                self.width
            ));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in top..top + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + w]);
            }
        }
        Self::new(self.channels, h, w, data)
    }

    pub fn mean_abs_diff(&self, other: &Frame) -> f64 {
        let n = self.data.len().max(1) as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / n
    }
}

/// How a dataset is cut into units of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkMode {
    /// Random chunks of [`TRAIN_CHUNK`] frames with random crops.
    Train,
    /// Consecutive, non-overlapping clips of [`TEST_CLIP`] frames.
    Test,
}

/// An ordered frame sequence held in memory.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    pub root: Option<PathBuf>,
    /// Source files in load order; empty for generated data.
    pub files: Vec<PathBuf>,
    pub frames: Vec<Frame>,
    pub mode: ChunkMode,
}

impl SequenceDataset {
    pub fn from_frames(frames: Vec<Frame>, mode: ChunkMode) -> Result<Self> {
        let first = frames.first().ok_or_else(|| data_err!("dataset has no frames"))?;
        let dims = (first.channels, first.height, first.width);
        if let Some(i) = frames
            .iter()
            .position(|f| (f.channels, f.height, f.width) != dims)
        {
            return Err(data_err!("frame {i} differs in shape from frame 0"));
        }
        Ok(Self {
            root: None,
            files: Vec::new(),
            frames,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn with_mode(mut self, mode: ChunkMode) -> Self {
        self.mode = mode;
        self
    }

    /// Consecutive clips of `len` frames. A shorter trailing clip is kept so
    /// every frame is evaluated.
    pub fn clips(&self, len: usize) -> Vec<Range<usize>> {
        let len = len.max(1);
        (0..self.len())
            .step_by(len)
            .map(|s| s..(s + len).min(self.len()))
            .collect()
    }

    /// Clips for the dataset's chunk mode.
    pub fn chunks(&self) -> Vec<Range<usize>> {
        match self.mode {
            ChunkMode::Train => self.clips(TRAIN_CHUNK),
            ChunkMode::Test => self.clips(TEST_CLIP),
        }
    }

    /// Number of distinct start positions for a chunk of `t` frames.
    pub fn num_train_starts(&self, t: usize) -> usize {
        (self.len() + 1).saturating_sub(t)
    }

    /// Samples `batch` chunks of `t` consecutive frames, each with its own
    /// random `crop x crop` window, as a `(T, B, C, crop, crop)` f32 tensor.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        batch: usize,
        t: usize,
        crop: usize,
    ) -> Result<Tensor> {
        let starts = self.num_train_starts(t);
        if t == 0 || starts == 0 {
            return Err(data_err!("dataset of {} frames cannot yield chunks of {t}", self.len()));
        }
        if crop > self.height() || crop > self.width() {
            return Err(data_err!(
                "crop {crop} larger than frames {}x{}",
                self.height(),
                self.width()
            ));
        }
        let c = self.channels();
        let mut data = vec![0f32; t * batch * c * crop * crop];
        let plane = c * crop * crop;
        for b in 0..batch {
            let s = rng.gen_range(0..starts);
            let top = rng.gen_range(0..=self.height() - crop);
            let left = rng.gen_range(0..=self.width() - crop);
            for k in 0..t {
                let f = self.frames[s + k].crop(top, left, crop, crop)?;
                let off = (k * batch + b) * plane;
                data[off..off + plane].copy_from_slice(&f.data);
            }
        }
        Ok(Tensor::from_vec(data, (t, batch, c, crop, crop), &Device::Cpu)?)
    }
}

const IMAGE_EXTS: [&str; 4] = ["png", "tif", "tiff", "npy"];

fn read_image(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| data_err!("{}: {e}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        image::DynamicImage::ImageLuma16(b) => {
            b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()
        }
        other => {
            return Err(data_err!(
                "{}: expected a single-channel 8/16-bit image, found {:?}",
                path.display(),
                other.color()
            ))
        }
    };
    Frame::new(1, h, w, data)
}

fn read_npy(path: &Path) -> Result<Frame> {
    use npyz::{DType as NpyType, TypeChar};
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let npy = npyz::NpyFile::new(std::io::BufReader::new(file))
        .map_err(|e| data_err!("{}: {e}", path.display()))?;
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let (h, w) = match shape.as_slice() {
        [h, w] | [1, h, w] => (*h, *w),
        other => {
            return Err(data_err!(
                "{}: expected a 2-D array, found shape {other:?}",
                path.display()
            ))
        }
    };
    let fortran = npy.order() == npyz::Order::Fortran;
    let ty = match npy.dtype() {
        NpyType::Plain(t) => (t.type_char(), t.size_field()),
        _ => return Err(data_err!("{}: structured arrays are not supported", path.display())),
    };
    let bad = |e: std::io::Error| data_err!("{}: {e}", path.display());
    let mut data: Vec<f32> = match ty {
        (TypeChar::Float, 4) => npy.into_vec::<f32>().map_err(bad)?,
        (TypeChar::Float, 8) => npy.into_vec::<f64>().map_err(bad)?.into_iter().map(|v| v as f32).collect(),
        (TypeChar::Uint, 1) => npy.into_vec::<u8>().map_err(bad)?.into_iter().map(|v| v as f32 / 255.0).collect(),
        (TypeChar::Uint, 2) => npy.into_vec::<u16>().map_err(bad)?.into_iter().map(|v| v as f32 / 65535.0).collect(),
        (c, s) => {
            return Err(data_err!(
                "{}: unsupported dtype {c:?} of {s} bytes",
                path.display()
            ))
        }
    };
    if fortran {
        let src = data.clone();
        for y in 0..h {
            for x in 0..w {
                data[y * w + x] = src[x * h + y];
            }
        }
    }
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(data_err!(
            "{}: float arrays must already be normalized to [0, 1], found {v}",
            path.display()
        ));
    }
    Frame::new(1, h, w, data)
}

/// Reads one frame file, normalizing by its declared bit depth.
pub fn read_frame(path: &Path) -> Result<Frame> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("npy") => read_npy(path),
        _ => read_image(path),
    }
}

/// Frame files directly inside `dir`, sorted lexicographically by name.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads every frame file in `dir`.
pub fn load_dataset(dir: impl AsRef<Path>, mode: ChunkMode) -> Result<SequenceDataset> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(data_err!("{} is not a directory", dir.display()));
    }
    let files = list_frame_files(dir)?;
    if files.is_empty() {
        return Err(data_err!(
            "{} contains no frame files ({})",
            dir.display(),
            IMAGE_EXTS.join(", ")
        ));
    }
    let frames = files.iter().map(|f| read_frame(f)).collect::<Result<Vec<_>>>()?;
    let (h, w) = (frames[0].height, frames[0].width);
    let odd: Vec<String> = files
        .iter()
        .zip(&frames)
        .filter(|(_, f)| (f.height, f.width) != (h, w))
        .map(|(p, f)| format!("{} ({}x{})", p.display(), f.width, f.height))
        .collect();
    if !odd.is_empty() {
        return Err(data_err!(
            "frames must share the resolution {w}x{h} of {}; mismatched: {}",
            files[0].display(),
            odd.join(", ")
        ));
    }
    Ok(SequenceDataset {
        root: Some(dir.to_path_buf()),
        files,
        frames,
        mode,
    })
}

/// Writes frames as 16-bit grayscale PNGs `frame_00000.png`, ...
pub fn write_frames(frames: &[Frame], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.channels != 1 {
                return Err(invalid!("only single-channel frames can be written, got {}", f.channels));
            }
            let px: Vec<u16> = f
                .data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                .collect();
            let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(f.width as u32, f.height as u32, px)
                .ok_or_else(|| invalid!("frame {i} buffer size mismatch"))?;
            let path = dir.join(format!("frame_{i:05}.png"));
            img.save(&path).map_err(|e| data_err!("{}: {e}", path.display()))?;
            Ok(path)
        })
        .collect()
}

struct Blob {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    sigma: f64,
    amp: f64,
    phase: f64,
    period: f64,
}

/// Drifting Gaussian blobs that slowly brighten and dim over a smooth
/// background. Deterministic in `seed`.
pub fn gen_synthetic(n_frames: usize, size: usize, seed: u64) -> Result<SequenceDataset> {
    if n_frames == 0 || size == 0 {
        return Err(invalid!("need at least one frame of positive size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let n_blobs = 4 + (size / 32).min(8);
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| Blob {
            x: rng.gen_range(0.0..s),
            y: rng.gen_range(0.0..s),
            vx: rng.gen_range(-1.0..1.0),
            vy: rng.gen_range(-1.0..1.0),
            sigma: rng.gen_range(0.04..0.12) * s,
            amp: rng.gen_range(0.25..0.55),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            period: rng.gen_range(40.0..120.0),
        })
        .collect();
    let (gx, gy) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let wave_phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let frames = (0..n_frames)
        .map(|t| {
            let t = t as f64;
            let mut data = Vec::with_capacity(size * size);
            for y in 0..size {
                for x in 0..size {
                    let (u, v) = (x as f64 / s, y as f64 / s);
                    let mut val = 0.15
                        + gx * (u - 0.5)
                        + gy * (v - 0.5)
                        + 0.03 * (std::f64::consts::TAU * (u + 0.5 * v) + wave_phase + 0.02 * t).sin();
                    for b in &blobs {
                        // wrap so blobs re-enter from the opposite side
                        let cx = (b.x + b.vx * t).rem_euclid(s);
                        let cy = (b.y + b.vy * t).rem_euclid(s);
                        let dx = wrap_delta(x as f64 - cx, s);
                        let dy = wrap_delta(y as f64 - cy, s);
                        let a = b.amp
                            * (1.0 + 0.3 * (std::f64::consts::TAU * t / b.period + b.phase).sin());
                        val += a * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp();
                    }
                    data.push(val.clamp(0.0, 1.0) as f32);
                }
            }
            Frame::new(1, size, size, data)
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceDataset::from_frames(frames, ChunkMode::Train)
}

fn wrap_delta(d: f64, s: f64) -> f64 {
    let d = d.rem_euclid(s);
    if d > s / 2.0 {
        d - s
    } else {
        d
    }
}
