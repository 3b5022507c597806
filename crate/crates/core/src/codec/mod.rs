//! I-frame and P-frame models, GOP orchestration and the stream container.

mod bitstream;
mod config;
mod gop;
mod model;
mod net;

pub use bitstream::{
    is_intra, Bitstream, FrameChunks, StreamHeader, DIGEST_LEN, FORMAT_VERSION, HEADER_LEN, MAGIC,
};
pub use config::{ModelConfig, Preset};
pub use gop::{compress_gop, decompress_gop, Compressed, FrameType, GopPlan, StreamDecoder};
pub(crate) use gop::hex;
pub use model::{
    IFrameModel, IFrameOutput, MotionOutput, PFrameModel, PFrameOutput, SsfModel,
};
pub use net::{CompressionNet, Encoded, HyperAnalysis, HyperSynthesis, NetOutput, Quantizer, HYPER_DOWNSAMPLE};
