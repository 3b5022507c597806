//! Minimal layer toolkit on top of candle tensors.

mod layers;
mod params;

pub use layers::{
    clamp_straight_through, gelu, pad_replicate, softplus, Conv2d, ConvTranspose2d, Init,
    LayerNorm, Linear,
};
pub use params::{ParamStore, Scope};
