//! Independent reference implementations shared by the test targets.

use candle_core::{DType, Device, Tensor};
use ssf_codec::nn::ParamStore;
use ssf_codec::scale_space::{FlowField, ScaleSpaceConfig, ScaleSpaceVolume};
use ssf_codec::transforms::swin::SwinBlock;
use ssf_codec::transforms::{FeedForward, InceptionBlock, Mlp, WindowAttention};

use super::{to_vec, uniform, uniform_vec};

pub fn cfg(scales: &[f64]) -> ScaleSpaceConfig {
    ScaleSpaceConfig {
        scales: scales.to_vec(),
        kernel_truncation: 3.0,
    }
}

pub fn flow(fx: &Tensor, fy: &Tensor, fz: &Tensor) -> FlowField {
    FlowField {
        fx: fx.clone(),
        fy: fy.clone(),
        fz: fz.clone(),
    }
}

/// Direct per-pixel trilinear sampling with edge clamping.
pub fn naive_warp(vol: &ScaleSpaceVolume, f: &FlowField) -> Vec<f64> {
    let (b, s, c, h, w) = vol.data.dims5().unwrap();
    let v = to_vec(&vol.data);
    let (fx, fy, fz) = (to_vec(&f.fx), to_vec(&f.fy), to_vec(&f.fz));
    let at = |bi: usize, z: i64, ci: usize, y: i64, x: i64| {
        let z = z.clamp(0, s as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        let x = x.clamp(0, w as i64 - 1) as usize;
        v[(((bi * s + z) * c + ci) * h + y) * w + x]
    };
    let mut out = vec![0.0; b * c * h * w];
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let p = (bi * h + y) * w + x;
                    let px = x as f64 + fx[p];
                    let py = y as f64 + fy[p];
                    let pz = fz[p].clamp(0.0, (s - 1) as f64);
                    let (x0, y0, z0) = (px.floor(), py.floor(), pz.floor());
                    let (tx, ty, tz) = (px - x0, py - y0, pz - z0);
                    let mut acc = 0.0;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let wgt = [1.0 - tz, tz][dz] * [1.0 - ty, ty][dy] * [1.0 - tx, tx][dx];
                                acc += wgt
                                    * at(
                                        bi,
                                        z0 as i64 + dz as i64,
                                        ci,
                                        y0 as i64 + dy as i64,
                                        x0 as i64 + dx as i64,
                                    );
                            }
                        }
                    }
                    out[((bi * c + ci) * h + y) * w + x] = acc;
                }
            }
        }
    }
    out
}


/// Fractional parts in `[0.2, 0.8]` keep finite differences away from the
/// piecewise-linear kinks at integer coordinates.
pub fn off_grid(shape: &[usize], range: i64, seed: u64) -> Tensor {
    let ints = uniform_vec(shape.iter().product(), 0.0, 1.0, seed);
    let fracs = uniform_vec(ints.len(), 0.2, 0.8, seed + 1);
    let vals: Vec<f64> = ints
        .iter()
        .zip(fracs)
        .map(|(u, f)| (u * range as f64).floor() - (range / 2) as f64 + f)
        .collect();
    Tensor::from_vec(vals, shape, &Device::Cpu).unwrap()
}

pub fn store(seed: u64) -> ParamStore {
    ParamStore::new(seed, DType::F64)
}

/// Overwrites every parameter with `U(-scale, scale)` so biases and norms are
/// exercised too.
pub fn randomize(store: &ParamStore, scale: f64, seed: u64) {
    for (i, (_, var)) in store.iter().enumerate() {
        let t = uniform(var.dims(), -scale, scale, seed * 1000 + i as u64, DType::F64);
        var.set(&t).unwrap();
    }
}

pub fn set(store: &ParamStore, name: &str, values: Vec<f64>) {
    let var = store.get(name).unwrap_or_else(|| panic!("no parameter {name}"));
    var.set(&Tensor::from_vec(values, var.dims(), &Device::Cpu).unwrap())
        .unwrap();
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.to_dtype(DType::F64).unwrap().to_vec2().unwrap()
}

pub fn affine(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(b)
        .map(|(row, bi)| bi + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * gamma[i] + beta[i])
        .collect()
}

/// Explicit per-head attention over one window; `allowed(i, j)` masks pairs.
pub fn attention_ref(
    attn: &WindowAttention,
    tokens: &[Vec<f64>],
    allowed: impl Fn(usize, usize) -> bool,
) -> Vec<Vec<f64>> {
    let n = tokens.len();
    let c = tokens[0].len();
    let heads = attn.num_heads;
    let d = c / heads;
    let m = attn.window;
    let span = 2 * m - 1;
    let wq = rows(&attn.qkv.weight);
    let bq = to_vec(&attn.qkv.bias);
    let table = rows(&attn.bias_table);
    let qkv: Vec<Vec<f64>> = tokens.iter().map(|t| affine(&wq, &bq, t)).collect();
    let mut concat = vec![vec![0.0; c]; n];
    for h in 0..heads {
        for i in 0..n {
            let mut scores = Vec::with_capacity(n);
            for j in 0..n {
                if !allowed(i, j) {
                    scores.push(f64::NEG_INFINITY);
                    continue;
                }
                let dot: f64 = (0..d).map(|k| qkv[i][h * d + k] * qkv[j][c + h * d + k]).sum();
                let dr = (i / m) as i64 - (j / m) as i64 + m as i64 - 1;
                let dc = (i % m) as i64 - (j % m) as i64 + m as i64 - 1;
                scores.push(dot / (d as f64).sqrt() + table[h][dr as usize * span + dc as usize]);
            }
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
            let z: f64 = e.iter().sum();
            for k in 0..d {
                concat[i][h * d + k] = (0..n).map(|j| e[j] / z * qkv[j][2 * c + h * d + k]).sum();
            }
        }
    }
    let wp = rows(&attn.proj.weight);
    let bp = to_vec(&attn.proj.bias);
    concat.iter().map(|t| affine(&wp, &bp, t)).collect()
}

pub fn mlp_ref(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = affine(&rows(&mlp.fc1.weight), &to_vec(&mlp.fc1.bias), x)
        .into_iter()
        .map(gelu)
        .collect();
    affine(&rows(&mlp.fc2.weight), &to_vec(&mlp.fc2.bias), &h)
}

/// Per-channel 3x3 correlation with edge replication on a `(C, h, w)` map.
pub fn depthwise_ref(x: &[f64], c: usize, h: usize, w: usize, kernels: &[[f64; 9]], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = bias[ch];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let sy = (y as i64 + ky as i64 - 1).clamp(0, h as i64 - 1) as usize;
                        let sx = (xx as i64 + kx as i64 - 1).clamp(0, w as i64 - 1) as usize;
                        acc += kernels[ch][ky * 3 + kx] * x[(ch * h + sy) * w + sx];
                    }
                }
                out[(ch * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn inception_kernels(block: &InceptionBlock) -> (Vec<[f64; 9]>, Vec<f64>) {
    let mut kernels = Vec::new();
    let mut bias = Vec::new();
    for (wt, b) in &block.branches {
        let vals = to_vec(wt);
        for k in vals.chunks(9) {
            kernels.push(k.try_into().unwrap());
        }
        bias.extend(to_vec(b));
    }
    (kernels, bias)
}

/// Transformer block evaluated token by token. `shift` is the cyclic shift;
/// pairs from different pre-shift regions never attend to each other.
pub fn block_ref(block: &SwinBlock, map: &[Vec<f64>], h: usize, w: usize, shift: usize) -> Vec<Vec<f64>> {
    let m = block.attn.window;
    let (g1, b1) = (to_vec(&block.norm1.gamma), to_vec(&block.norm1.beta));
    let (g2, b2) = (to_vec(&block.norm2.gamma), to_vec(&block.norm2.beta));
    let normed: Vec<Vec<f64>> = map.iter().map(|t| layer_norm(t, &g1, &b1)).collect();
    let region = |p: usize, len: usize| {
        if shift == 0 || p < len - m {
            0
        } else if p < len - shift {
            1
        } else {
            2
        }
    };
    // attention output in rolled coordinates
    let mut rolled_out = vec![Vec::new(); h * w];
    for wr in 0..h / m {
        for wc in 0..w / m {
            let pos: Vec<(usize, usize)> = (0..m * m).map(|k| (wr * m + k / m, wc * m + k % m)).collect();
            let tokens: Vec<Vec<f64>> = pos
                .iter()
                .map(|&(r, q)| normed[((r + shift) % h) * w + (q + shift) % w].clone())
                .collect();
            let label = |k: usize| (region(pos[k].0, h), region(pos[k].1, w));
            let out = attention_ref(&block.attn, &tokens, |i, j| label(i) == label(j));
            for (k, &(r, q)) in pos.iter().enumerate() {
                rolled_out[r * w + q] = out[k].clone();
            }
        }
    }
    let mut x1 = Vec::with_capacity(h * w);
    for y in 0..h {
        for xx in 0..w {
            let a = &rolled_out[((y + h - shift) % h) * w + (xx + w - shift) % w];
            x1.push(map[y * w + xx].iter().zip(a).map(|(u, v)| u + v).collect::<Vec<f64>>());
        }
    }
    let FeedForward::Mlp(mlp) = &block.ffn else {
        panic!("reference covers the MLP feed-forward only")
    };
    x1.iter()
        .map(|t| {
            let f = mlp_ref(mlp, &layer_norm(t, &g2, &b2));
            t.iter().zip(f).map(|(u, v)| u + v).collect()
        })
        .collect()
}

pub fn map_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (b, h, w, c) = t.dims4().unwrap();
    assert_eq!(b, 1);
    to_vec(t).chunks(c).map(|r| r.to_vec()).collect::<Vec<_>>()[..h * w].to_vec()
}

pub fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) {
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }
}

pub fn set_delta_kernels(s: &ParamStore, prefix: &str, group: usize) {
    for g in 0..3 {
        let mut k = vec![0.0; group * 9];
        for c in 0..group {
            k[c * 9 + 4] = 1.0;
        }
        set(s, &format!("{prefix}branch{g}.weight"), k);
        set(s, &format!("{prefix}branch{g}.bias"), vec![0.0; group]);
    }
}
