//! Decode-verified rate-distortion evaluation and RD-curve emission.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{compress_gop, decompress_gop, hex, GopPlan, SsfModel};
use crate::data::{Frame, SequenceDataset};
use crate::error::{data_err, decode_err, invalid, Error, Result};
use crate::metrics::{bpp, capped, psnr};

/// One point of a rate-distortion curve.
fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    /// Series label, usually the transform family.
    pub family: String,
    /// NaN when unknown; serialized as `null`.
    #[serde(deserialize_with = "nan_if_null")]
    pub lambda: f64,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Hex checkpoint digest.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub clip: usize,
    /// Index into the dataset.
    pub frame: usize,
    /// `"I"` or `"P"`.
    pub kind: String,
    /// Container bits for this frame, chunk length prefixes included.
    pub bits: usize,
    /// Capped at 100 dB.
    pub psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub point: RdPoint,
    pub frames: Vec<FrameRecord>,
    pub clips: usize,
    pub total_bytes: usize,
    pub height: usize,
    pub width: usize,
    pub gop_size: usize,
    /// Whether container headers are counted in `point.bpp`.
    pub include_header: bool,
}

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| invalid!("{e}"))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| data_err!("{}: {e}", path.display()))
    }
}

fn bitwise_equal(a: &Frame, b: &Frame) -> bool {
    (a.channels, a.height, a.width) == (b.channels, b.height, b.width)
        && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Options for [`eval_model`].
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub plan: GopPlan,
    /// Frames per independently coded clip.
    pub clip_len: usize,
    pub include_header: bool,
    pub lambda: f64,
    /// Series label; defaults to the model family.
    pub label: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            plan: GopPlan::default(),
            clip_len: crate::data::TEST_CLIP,
            include_header: true,
            lambda: f64::NAN,
            label: None,
        }
    }
}

/// Compresses every clip, decodes the stream, checks the decoder matches the
/// encoder bit for bit, and measures PSNR and bpp on the decoded frames.
pub fn eval_model(model: &SsfModel, data: &SequenceDataset, opts: &EvalOptions) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(data_err!("nothing to evaluate"));
    }
    let mut frames = Vec::with_capacity(data.len());
    let mut total_bytes = 0usize;
    let clips = data.clips(opts.clip_len);
    for (ci, range) in clips.iter().enumerate() {
        let originals = &data.frames[range.clone()];
        let enc = compress_gop(originals, model, &opts.plan)?;
        let decoded = decompress_gop(&enc.bytes, model)?;
        if decoded.len() != originals.len() {
            return Err(decode_err!(
                "clip {ci}: decoded {} frames, encoded {}",
                decoded.len(),
                originals.len()
            ));
        }
        for (k, (dec, rec)) in decoded.iter().zip(&enc.reconstructions).enumerate() {
            if !bitwise_equal(dec, rec) {
                return Err(decode_err!(
                    "clip {ci} frame {k}: decoder output differs from encoder reconstruction \
                     (mean abs diff {:e}); run with SSF_DETERMINISTIC=1",
                    dec.mean_abs_diff(rec)
                ));
            }
        }
        total_bytes += enc.bytes.len();
        for (k, (dec, orig)) in decoded.iter().zip(originals).enumerate() {
            let chunk = &enc.bitstream.frames[k];
            frames.push(FrameRecord {
                clip: ci,
                frame: range.start + k,
                kind: if chunk.is_intra() { "I" } else { "P" }.to_string(),
                bits: 8 * chunk.stored_len(),
                psnr_db: capped(psnr(orig, dec)?),
            });
        }
    }
    let n = frames.len();
    let bytes_for_rate = if opts.include_header {
        total_bytes
    } else {
        total_bytes - clips.len() * crate::codec::HEADER_LEN
    };
    let point = RdPoint {
        family: opts
            .label
            .clone()
            .unwrap_or_else(|| model.config.family.to_string()),
        lambda: opts.lambda,
        bpp: bpp(bytes_for_rate, n, data.height(), data.width(), true),
        psnr_db: frames.iter().map(|f| f.psnr_db).sum::<f64>() / n as f64,
        digest: hex(&model.digest()?),
    };
    Ok(EvalReport {
        point,
        frames,
        clips: clips.len(),
        total_bytes,
        height: data.height(),
        width: data.width(),
        gop_size: opts.plan.gop_size,
        include_header: opts.include_header,
    })
}

pub const CSV_HEADER: &str = "family,lambda,bpp,psnr_db,digest";

pub fn points_to_csv(points: &[RdPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.family, p.lambda, p.bpp, p.psnr_db, p.digest
        ));
    }
    out
}

pub fn points_from_csv(text: &str) -> Result<Vec<RdPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(data_err!("RD csv must start with `{CSV_HEADER}`"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(data_err!("RD csv row `{l}` does not have 5 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| data_err!("bad number `{s}`"));
            Ok(RdPoint {
                family: f[0].to_string(),
                lambda: num(f[1])?,
                bpp: num(f[2])?,
                psnr_db: num(f[3])?,
                digest: f[4].to_string(),
            })
        })
        .collect()
}

/// Series labels in order of first appearance.
pub fn series_order(points: &[RdPoint]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for p in points {
        if !out.contains(&p.family) {
            out.push(p.family.clone());
        }
    }
    out
}

/// Writes `<prefix>.csv`, `<prefix>.json` and `<prefix>.svg` (bpp against
/// PSNR, one series per family in input order). Returns the written paths.
pub fn emit_rd_curve(points: &[RdPoint], prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let with_ext = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    let csv = with_ext("csv");
    std::fs::write(&csv, points_to_csv(points)).map_err(|e| Error::io(&csv, e))?;
    let json = with_ext("json");
    let text = serde_json::to_string_pretty(points).map_err(|e| invalid!("{e}"))?;
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    let svg = with_ext("svg");
    plot_svg(points, &svg)?;
    Ok(vec![csv, json, svg])
}

const PALETTE: [plotters::style::RGBColor; 6] = [
    plotters::style::RGBColor(31, 119, 180),
    plotters::style::RGBColor(214, 39, 40),
    plotters::style::RGBColor(44, 160, 44),
    plotters::style::RGBColor(148, 103, 189),
    plotters::style::RGBColor(255, 127, 14),
    plotters::style::RGBColor(23, 190, 207),
];

fn plot_svg(points: &[RdPoint], path: &Path) -> Result<()> {
    use plotters::prelude::*;
    let err = |e: &dyn std::fmt::Display| invalid!("plot {}: {e}", path.display());
    let finite: Vec<&RdPoint> = points
        .iter()
        .filter(|p| p.bpp.is_finite() && p.psnr_db.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 1e-3f64, f64::INFINITY, f64::NEG_INFINITY);
    for p in &finite {
        x1 = x1.max(p.bpp);
        y0 = y0.min(p.psnr_db);
        y1 = y1.max(p.psnr_db);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    let pad = ((y1 - y0) * 0.1).max(0.5);
    x0 = x0.min(0.0);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1 * 1.1, (y0 - pad)..(y1 + pad))
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("bpp")
        .y_desc("PSNR [dB]")
        .draw()
        .map_err(|e| err(&e))?;
    for (i, family) in series_order(points).iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut series: Vec<(f64, f64)> = finite
            .iter()
            .filter(|p| &p.family == family)
            .map(|p| (p.bpp, p.psnr_db))
            .collect();
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart
            .draw_series(LineSeries::new(series.clone(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(family.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(series.iter().map(|&(x, y)| Circle::new((x, y), 3, color.filled())))
            .map_err(|e| err(&e))?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
