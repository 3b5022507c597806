//! The `.ssfv` container.
//!
//! ```text
//! "SSFV" | version u8 | width u16 | height u16 | channels u8 | gop_size u8
//!        | checkpoint digest [16] | frame count u32 | chunks...
//! ```
//!
//! Multi-byte integers are little-endian. Each chunk is `[u32 len][payload]`.
//! I-frames own one chunk, P-frames two (motion, then residual).

use crate::entropy::{frame_chunk, read_chunk};
use crate::error::{decode_err, invalid, Result};

pub const MAGIC: &[u8; 4] = b"SSFV";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 31;
pub const DIGEST_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub gop_size: u8,
    pub digest: [u8; DIGEST_LEN],
    pub frame_count: u32,
}

impl StreamHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        out[4] = FORMAT_VERSION;
        out[5..7].copy_from_slice(&self.width.to_le_bytes());
        out[7..9].copy_from_slice(&self.height.to_le_bytes());
        out[9] = self.channels;
        out[10] = self.gop_size;
        out[11..27].copy_from_slice(&self.digest);
        out[27..31].copy_from_slice(&self.frame_count.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(decode_err!(
                "stream is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            ));
        }
        if &bytes[..4] != MAGIC {
            return Err(decode_err!("bad magic {:?}, not an SSFV stream", &bytes[..4]));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(decode_err!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                bytes[4]
            ));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let header = Self {
            width: u16_at(5),
            height: u16_at(7),
            channels: bytes[9],
            gop_size: bytes[10],
            digest: bytes[11..27].try_into().unwrap(),
            frame_count: u32::from_le_bytes(bytes[27..31].try_into().unwrap()),
        };
        if header.width == 0 || header.height == 0 || header.channels == 0 || header.gop_size == 0 {
            return Err(decode_err!("header has a zero dimension or GOP size"));
        }
        Ok(header)
    }
}

/// Payloads belonging to one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameChunks {
    Intra(Vec<u8>),
    Inter { motion: Vec<u8>, residual: Vec<u8> },
}

impl FrameChunks {
    pub fn is_intra(&self) -> bool {
        matches!(self, FrameChunks::Intra(_))
    }

    /// Bytes occupied in the container, length prefixes included.
    pub fn stored_len(&self) -> usize {
        match self {
            FrameChunks::Intra(p) => 4 + p.len(),
            FrameChunks::Inter { motion, residual } => 8 + motion.len() + residual.len(),
        }
    }
}

/// Frame index `i` is intra-coded when it starts a GOP.
pub fn is_intra(index: usize, gop_size: usize) -> bool {
    index % gop_size == 0
}

/// A parsed container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: StreamHeader,
    pub frames: Vec<FrameChunks>,
}

impl Bitstream {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.frames.len() != self.header.frame_count as usize {
            return Err(invalid!(
                "header announces {} frames, stream holds {}",
                self.header.frame_count,
                self.frames.len()
            ));
        }
        let mut out = self.header.to_bytes().to_vec();
        for (i, f) in self.frames.iter().enumerate() {
            if f.is_intra() != is_intra(i, self.header.gop_size as usize) {
                return Err(invalid!("frame {i} has the wrong coding type for its GOP position"));
            }
            match f {
                FrameChunks::Intra(p) => out.extend(frame_chunk(p)),
                FrameChunks::Inter { motion, residual } => {
                    out.extend(frame_chunk(motion));
                    out.extend(frame_chunk(residual));
                }
            }
        }
        Ok(out)
    }

    /// Parses the header and splits every frame's chunks. Chunk payloads are
    /// not entropy-decoded here; framing errors name the frame index.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let header = StreamHeader::parse(bytes)?;
        let gop = header.gop_size as usize;
        let mut pos = HEADER_LEN;
        let mut frames = Vec::with_capacity(header.frame_count as usize);
        for i in 0..header.frame_count as usize {
            let mut next = || read_chunk(bytes, &mut pos).map(<[u8]>::to_vec);
            let chunks = if is_intra(i, gop) {
                FrameChunks::Intra(next().map_err(|e| e.in_frame(i))?)
            } else {
                let motion = next().map_err(|e| e.in_frame(i))?;
                let residual = next().map_err(|e| e.in_frame(i))?;
                FrameChunks::Inter { motion, residual }
            };
            frames.push(chunks);
        }
        if pos != bytes.len() {
            return Err(decode_err!("{} unexpected bytes after the last frame", bytes.len() - pos));
        }
        Ok(Self { header, frames })
    }

    /// Total container size in bytes.
    pub fn len_bytes(&self) -> usize {
        HEADER_LEN + self.frames.iter().map(FrameChunks::stored_len).sum::<usize>()
    }

    pub fn num_intra(&self) -> usize {
        self.frames.iter().filter(|f| f.is_intra()).count()
    }

    pub fn num_inter(&self) -> usize {
        self.frames.len() - self.num_intra()
    }
}
