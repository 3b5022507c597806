//! Closed-loop GOP compression: every P-frame references the reconstruction
//! the decoder will hold, so both sides stay bitwise in sync.

use candle_core::Tensor;

use super::bitstream::{is_intra, Bitstream, FrameChunks, StreamHeader};
use super::model::SsfModel;
use crate::data::Frame;
use crate::error::{decode_err, invalid, Result};
use crate::nn::pad_replicate;

/// Low-delay `IPPP...` pattern: every GOP opens with an I-frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GopPlan {
    pub gop_size: usize,
}

impl Default for GopPlan {
    fn default() -> Self {
        Self { gop_size: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    I,
    P,
}

impl GopPlan {
    pub fn new(gop_size: usize) -> Result<Self> {
        if gop_size == 0 || gop_size > u8::MAX as usize {
            return Err(invalid!("GOP size must be in 1..=255, got {gop_size}"));
        }
        Ok(Self { gop_size })
    }

    pub fn frame_type(&self, index: usize) -> FrameType {
        if is_intra(index, self.gop_size) {
            FrameType::I
        } else {
            FrameType::P
        }
    }

    pub fn pattern(&self, frames: usize) -> Vec<FrameType> {
        (0..frames).map(|i| self.frame_type(i)).collect()
    }
}

/// Encoder output: the serialized stream plus the reconstructions the
/// decoder is expected to reproduce.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub bitstream: Bitstream,
    pub bytes: Vec<u8>,
    pub reconstructions: Vec<Frame>,
}

/// Side lengths padded up to the model's divisibility.
fn padded_dims(model: &SsfModel, h: usize, w: usize) -> (usize, usize) {
    let d = model.config.divisibility();
    (h.div_ceil(d) * d, w.div_ceil(d) * d)
}

fn to_padded_tensor(model: &SsfModel, frame: &Frame) -> Result<Tensor> {
    let (hp, wp) = padded_dims(model, frame.height, frame.width);
    let t = frame.to_tensor(model.store.device())?.to_dtype(model.dtype())?.unsqueeze(0)?;
    let t = pad_replicate(&t, 2, 0, hp - frame.height)?;
    pad_replicate(&t, 3, 0, wp - frame.width)
}

fn crop_to_frame(t: &Tensor, h: usize, w: usize) -> Result<Frame> {
    Frame::from_tensor(&t.squeeze(0)?.narrow(1, 0, h)?.narrow(2, 0, w)?)
}

/// Codes `frames` as consecutive GOPs. Frames whose sides are not multiples
/// of the model's divisibility are edge-padded internally and cropped back on
/// decode.
pub fn compress_gop(frames: &[Frame], model: &SsfModel, plan: &GopPlan) -> Result<Compressed> {
    let first = frames.first().ok_or_else(|| invalid!("cannot compress an empty clip"))?;
    let (c, h, w) = (first.channels, first.height, first.width);
    if let Some(i) = frames.iter().position(|f| (f.channels, f.height, f.width) != (c, h, w)) {
        return Err(invalid!(
            "frame {i} is {}x{}x{}, frame 0 is {c}x{h}x{w}",
            frames[i].channels,
            frames[i].height,
            frames[i].width
        ));
    }
    if c != model.config.channels {
        return Err(invalid!("model codes {} channels, frames have {c}", model.config.channels));
    }
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(invalid!("frame {w}x{h} exceeds the container's 16-bit size fields"));
    }
    let plan = GopPlan::new(plan.gop_size)?;
    let (hp, wp) = padded_dims(model, h, w);
    model.config.validate_frame(hp, wp)?;

    let mut chunks = Vec::with_capacity(frames.len());
    let mut reconstructions = Vec::with_capacity(frames.len());
    let mut reference: Option<Tensor> = None;
    for (i, frame) in frames.iter().enumerate() {
        let x = to_padded_tensor(model, frame)?;
        let x_hat = match (plan.frame_type(i), &reference) {
            (FrameType::P, Some(r)) => {
                let (motion, residual, x_hat) = model.pframe.encode(&x, r)?;
                chunks.push(FrameChunks::Inter { motion, residual });
                x_hat
            }
            _ => {
                let (payload, x_hat) = model.iframe.encode(&x)?;
                chunks.push(FrameChunks::Intra(payload));
                x_hat
            }
        };
        reconstructions.push(crop_to_frame(&x_hat, h, w)?);
        reference = Some(x_hat);
    }
    let bitstream = Bitstream {
        header: StreamHeader {
            width: w as u16,
            height: h as u16,
            channels: c as u8,
            gop_size: plan.gop_size as u8,
            digest: model.digest()?,
            frame_count: frames.len() as u32,
        },
        frames: chunks,
    };
    let bytes = bitstream.to_bytes()?;
    Ok(Compressed {
        bitstream,
        bytes,
        reconstructions,
    })
}

/// Decodes frames one at a time, so a corrupt chunk at frame `k` still
/// yields frames `0..k`.
pub struct StreamDecoder<'m> {
    model: &'m SsfModel,
    stream: Bitstream,
    next: usize,
    reference: Option<Tensor>,
    like: Tensor,
    failed: bool,
}

impl<'m> StreamDecoder<'m> {
    /// Parses the container and checks it against `model`.
    pub fn new(bytes: &[u8], model: &'m SsfModel) -> Result<Self> {
        let stream = Bitstream::parse(bytes)?;
        let h = &stream.header;
        if h.digest != model.digest()? {
            return Err(decode_err!(
                "stream was produced by checkpoint {}, loaded checkpoint is {}",
                hex(&h.digest),
                hex(&model.digest()?)
            ));
        }
        if h.channels as usize != model.config.channels {
            return Err(decode_err!(
                "stream has {} channels, model codes {}",
                h.channels,
                model.config.channels
            ));
        }
        let (hp, wp) = padded_dims(model, h.height as usize, h.width as usize);
        model.config.validate_frame(hp, wp).map_err(|e| decode_err!("{e}"))?;
        let like = Tensor::zeros(1, model.dtype(), model.store.device())?;
        Ok(Self {
            model,
            stream,
            next: 0,
            reference: None,
            like,
            failed: false,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.stream.header
    }

    fn decode_next(&mut self) -> Result<Frame> {
        let i = self.next;
        let (h, w) = (self.stream.header.height as usize, self.stream.header.width as usize);
        let (hp, wp) = padded_dims(self.model, h, w);
        let x_hat = match (&self.stream.frames[i], &self.reference) {
            (FrameChunks::Intra(p), _) => self.model.iframe.decode(p, hp, wp, &self.like)?,
            (FrameChunks::Inter { motion, residual }, Some(r)) => {
                self.model.pframe.decode(motion, residual, r)?
            }
            (FrameChunks::Inter { .. }, None) => {
                return Err(decode_err!("P-frame without a reference"));
            }
        };
        let frame = crop_to_frame(&x_hat, h, w)?;
        self.reference = Some(x_hat);
        Ok(frame)
    }
}

impl Iterator for StreamDecoder<'_> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.stream.frames.len() {
            return None;
        }
        let out = self.decode_next().map_err(|e| e.in_frame(self.next));
        self.failed = out.is_err();
        self.next += 1;
        Some(out)
    }
}

/// Decodes every frame of a container.
pub fn decompress_gop(bytes: &[u8], model: &SsfModel) -> Result<Vec<Frame>> {
    StreamDecoder::new(bytes, model)?.collect()
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
