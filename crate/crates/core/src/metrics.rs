//! Distortion and rate metrics.

use crate::codec::HEADER_LEN;
use crate::data::Frame;
use crate::error::{invalid, Result};

/// PSNR reported for identical frames in tables and reports.
pub const PSNR_CAP_DB: f64 = 100.0;

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(invalid!(
            "cannot compare {}x{}x{} with {}x{}x{}",
            a.channels,
            a.height,
            a.width,
            b.channels,
            b.height,
            b.width
        ));
    }
    let n = a.data.len().max(1) as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// `10 log10(1 / MSE)` for frames normalized to `[0, 1]`; `+inf` when the
/// frames are identical.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// PSNR limited to [`PSNR_CAP_DB`] for tabulation.
pub fn capped(psnr_db: f64) -> f64 {
    psnr_db.min(PSNR_CAP_DB)
}

/// Bits per pixel of a stream of `stream_bytes` bytes covering `frames`
/// frames of `h x w`. With `include_header == false` the fixed container
/// header is not counted.
pub fn bpp(stream_bytes: usize, frames: usize, h: usize, w: usize, include_header: bool) -> f64 {
    let bytes = if include_header {
        stream_bytes
    } else {
        stream_bytes.saturating_sub(HEADER_LEN)
    };
    8.0 * bytes as f64 / (frames * h * w) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_known_mse() {
        let a = Frame::filled(1, 4, 4, 0.5);
        let b = Frame::filled(1, 4, 4, 0.75);
        assert!((psnr(&a, &b).unwrap() - 10.0 * 16f64.log10()).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(capped(psnr(&a, &a).unwrap()), 100.0);
    }

    #[test]
    fn bpp_arithmetic() {
        // 4096-bit payload plus header, one 64x64 frame
        assert_eq!(bpp(512 + HEADER_LEN, 1, 64, 64, false), 1.0);
        let one = bpp(1000, 1, 64, 64, true);
        assert_eq!(bpp(1000, 2, 64, 64, true), one / 2.0);
    }
}
