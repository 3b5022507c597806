mod common;

use candle_core::{DType, Device, Tensor};
use common::oracles::*;
use common::{grad_check, max_abs_diff, to_vec, uniform};
use ssf_codec::nn::ParamStore;
use ssf_codec::transforms::attention::{relative_position_index, shifted_window_mask};
use ssf_codec::transforms::flaff::depthwise3x3;
use ssf_codec::transforms::tokens::{window_partition, window_reverse};
use ssf_codec::transforms::{
    build_decoder, build_encoder, patchify, unpatchify, Flaff, InceptionBlock, Mlp,
    PatchMerge, PatchSplit, SwinBlockPair, TokenMap, TransformConfig, TransformFamily,
    WindowAttention,
};

#[test]
fn patchify_token_order_is_row_major_over_the_grid() {
    let vals: Vec<f64> = (0..64).map(|i| i as f64).collect();
    let x = Tensor::from_vec(vals, (1, 1, 8, 8), &Device::Cpu).unwrap();
    let t = patchify(&x, 4).unwrap();
    assert_eq!(t.dims(), (1, 2, 2, 16));
    let tokens = map_rows(&t.data);
    for (k, tok) in tokens.iter().enumerate() {
        let (gr, gc) = (k / 2, k % 2);
        for (i, v) in tok.iter().enumerate() {
            let (r, c) = (i / 4, i % 4);
            assert_eq!(*v, ((gr * 4 + r) * 8 + gc * 4 + c) as f64);
        }
    }
    let y = uniform(&[2, 3, 8, 12], 0.0, 1.0, 1, DType::F32);
    let back = unpatchify(&patchify(&y, 4).unwrap(), 4, 3).unwrap();
    assert_eq!(max_abs_diff(&back, &y), 0.0);
    assert!(patchify(&y, 5).is_err());
}

#[test]
fn attention_matches_explicit_loop() {
    for (window, dim, heads, seed) in [(2, 4, 1, 1), (2, 8, 2, 2), (4, 8, 2, 3), (3, 6, 3, 4)] {
        let mut s = store(seed);
        let attn = WindowAttention::new(&mut s.root(), dim, heads, window).unwrap();
        randomize(&s, 0.5, seed);
        let n = window * window;
        let x = uniform(&[3, n, dim], -1.0, 1.0, seed + 10, DType::F64);
        let out = attn.forward(&x, None).unwrap();
        for b in 0..3 {
            let tokens: Vec<Vec<f64>> = to_vec(&x.get(b).unwrap()).chunks(dim).map(|r| r.to_vec()).collect();
            let reference = attention_ref(&attn, &tokens, |_, _| true);
            let got: Vec<Vec<f64>> = to_vec(&out.get(b).unwrap()).chunks(dim).map(|r| r.to_vec()).collect();
            assert_close(&got, &reference, 1e-5);
        }
    }
}

#[test]
fn single_token_window_projects_its_value() {
    let mut s = store(5);
    let attn = WindowAttention::new(&mut s.root(), 4, 2, 1).unwrap();
    randomize(&s, 0.5, 5);
    let x = uniform(&[1, 1, 4], -1.0, 1.0, 6, DType::F64);
    let out = to_vec(&attn.forward(&x, None).unwrap());
    let xs = to_vec(&x);
    let qkv = affine(&rows(&attn.qkv.weight), &to_vec(&attn.qkv.bias), &xs);
    let expect = affine(&rows(&attn.proj.weight), &to_vec(&attn.proj.bias), &qkv[8..12]);
    for (a, e) in out.iter().zip(&expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn identical_keys_average_the_values() {
    let (dim, window) = (4, 2);
    let mut s = store(7);
    let attn = WindowAttention::new(&mut s.root(), dim, 1, window).unwrap();
    randomize(&s, 0.5, 7);
    // keys depend on nothing: zero key weights, shared key bias
    let mut w = rows(&attn.qkv.weight);
    for row in w.iter_mut().skip(dim).take(dim) {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    set(&s, "qkv.weight", w.concat());
    set(&s, "bias_table", vec![0.0; 9]);
    let mut proj = vec![0.0; dim * dim];
    for i in 0..dim {
        proj[i * dim + i] = 1.0;
    }
    set(&s, "proj.weight", proj);
    set(&s, "proj.bias", vec![0.0; dim]);
    let x = uniform(&[1, 4, dim], -1.0, 1.0, 8, DType::F64);
    let out = map_rows(&attn.forward(&x, None).unwrap().reshape((1, 2, 2, dim)).unwrap());
    let tokens: Vec<Vec<f64>> = to_vec(&x).chunks(dim).map(|r| r.to_vec()).collect();
    let wq = rows(&attn.qkv.weight);
    let bq = to_vec(&attn.qkv.bias);
    let values: Vec<Vec<f64>> = tokens.iter().map(|t| affine(&wq, &bq, t)[2 * dim..].to_vec()).collect();
    for row in &out {
        for k in 0..dim {
            let mean = values.iter().map(|v| v[k]).sum::<f64>() / 4.0;
            assert!((row[k] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn relative_bias_is_shared_by_equal_offsets() {
    let mut s = store(9);
    let attn = WindowAttention::new(&mut s.root(), 4, 2, 3).unwrap();
    randomize(&s, 1.0, 9);
    let bias = to_vec(&attn.position_bias().unwrap());
    let n = 9;
    for h in 0..2 {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let same = (i / 3) as i64 - (j / 3) as i64 == (k / 3) as i64 - (l / 3) as i64
                            && (i % 3) as i64 - (j % 3) as i64 == (k % 3) as i64 - (l % 3) as i64;
                        if same {
                            assert_eq!(bias[(h * n + i) * n + j], bias[(h * n + k) * n + l]);
                        }
                    }
                }
            }
        }
    }
    assert_eq!(relative_position_index(3).len(), 81);
}

fn swin_cfg(family: TransformFamily) -> TransformConfig {
    TransformConfig::desk(family, 1, 1)
}

#[test]
fn zero_shift_block_equals_regular_block_bitwise() {
    let cfg = swin_cfg(TransformFamily::Swin);
    let mut s = store(11);
    let pair = SwinBlockPair::new(&mut s.root(), &cfg, 8, 2).unwrap();
    randomize(&s, 0.3, 11);
    let x = uniform(&[2, 8, 8, 8], -1.0, 1.0, 12, DType::F64);
    let mut unshifted = pair.shifted.clone();
    unshifted.shift = 0;
    let a = unshifted.forward(&x).unwrap();
    // the shifted code path run with a zero roll and a zero-shift mask
    let mask = shifted_window_mask(8, 8, 4, 0, &Device::Cpu).unwrap();
    assert!(to_vec(&mask).iter().all(|&v| v == 0.0));
    let normed = unshifted.norm1.forward(&x).unwrap().roll(0, 1).unwrap().roll(0, 2).unwrap();
    let windows = window_partition(&normed, 4).unwrap();
    let att = unshifted.attn.forward(&windows, Some(&mask)).unwrap();
    let branch = window_reverse(&att, 4, 8, 8).unwrap().roll(0, 1).unwrap().roll(0, 2).unwrap();
    assert_eq!(to_vec(&unshifted.attention_branch(&x).unwrap()), to_vec(&branch));
    // with a real shift the output differs
    assert!(max_abs_diff(&pair.shifted.forward(&x).unwrap(), &a) > 1e-6);
}

#[test]
fn block_pair_matches_four_line_reference() {
    let cfg = swin_cfg(TransformFamily::Swin);
    let mut s = store(13);
    let dim = 8;
    let pair = SwinBlockPair::new(&mut s.root(), &cfg, dim, 2).unwrap();
    randomize(&s, 0.3, 13);
    let (h, w) = (8, 8);
    let x = uniform(&[1, h, w, dim], -1.0, 1.0, 14, DType::F64);
    let out = pair.forward(&TokenMap::new(x.clone()).unwrap()).unwrap();
    let mid = block_ref(&pair.regular, &map_rows(&x), h, w, 0);
    let reference = block_ref(&pair.shifted, &mid, h, w, cfg.window_size / 2);
    assert_eq!(out.dims(), (1, h, w, dim));
    assert_close(&map_rows(&out.data), &reference, 1e-9);
}

#[test]
fn zero_output_projections_make_the_pair_an_identity() {
    for family in [TransformFamily::Swin, TransformFamily::Flawin] {
        let cfg = swin_cfg(family);
        let mut s = store(15);
        let pair = SwinBlockPair::new(&mut s.root(), &cfg, 8, 2).unwrap();
        randomize(&s, 0.3, 15);
        let names: Vec<String> = s
            .iter()
            .map(|(n, _)| n.to_string())
            .filter(|n| {
                n.contains("attn.proj") || n.contains("mlp.fc2") || n.contains("flaff.down")
            })
            .collect();
        assert_eq!(names.len(), 8, "{names:?}");
        for n in &names {
            let numel = s.get(n).unwrap().elem_count();
            set(&s, n, vec![0.0; numel]);
        }
        let x = uniform(&[1, 8, 8, 8], -1.0, 1.0, 16, DType::F64);
        let out = pair.forward(&TokenMap::new(x.clone()).unwrap()).unwrap();
        assert_eq!(to_vec(&out.data), to_vec(&x), "{family}");
    }
}

#[test]
fn mlp_matches_matrix_oracle() {
    let mut s = store(17);
    let mlp = Mlp::new(&mut s.root(), 6, 18).unwrap();
    randomize(&s, 0.5, 17);
    let x = uniform(&[2, 3, 6], -2.0, 2.0, 18, DType::F64);
    let out = to_vec(&mlp.forward(&x).unwrap());
    for (k, tok) in to_vec(&x).chunks(6).enumerate() {
        for (a, e) in out[k * 6..(k + 1) * 6].iter().zip(mlp_ref(&mlp, tok)) {
            assert!((a - e).abs() < 1e-6);
        }
    }
}

#[test]
fn mlp_zero_weights_and_near_identity() {
    let mut s = store(19);
    let mlp = Mlp::new(&mut s.root(), 4, 12).unwrap();
    for (n, v) in s.iter() {
        set(&s, n, vec![0.0; v.elem_count()]);
    }
    let x = uniform(&[5, 4], -3.0, 3.0, 20, DType::F64);
    assert!(to_vec(&mlp.forward(&x).unwrap()).iter().all(|&v| v == 0.0));
    // embed into the first 4 hidden units and read them back
    let mut w1 = vec![0.0; 12 * 4];
    let mut w2 = vec![0.0; 4 * 12];
    for i in 0..4 {
        w1[i * 4 + i] = 1.0;
        w2[i * 12 + i] = 1.0;
    }
    set(&s, "fc1.weight", w1);
    set(&s, "fc2.weight", w2);
    let big = uniform(&[5, 4], 6.0, 12.0, 21, DType::F64);
    let out = mlp.forward(&big).unwrap();
    for (a, e) in to_vec(&out).iter().zip(to_vec(&big)) {
        assert!((a - e).abs() / e < 1e-8);
    }
}

#[test]
fn inception_matches_nested_loops() {
    let mut s = store(23);
    let block = InceptionBlock::new(&mut s.root(), 6).unwrap();
    randomize(&s, 0.5, 23);
    let (h, w) = (5, 5);
    let x = uniform(&[2, 6, h, w], -1.0, 1.0, 24, DType::F64);
    let out = to_vec(&block.forward(&x).unwrap());
    let (kernels, bias) = inception_kernels(&block);
    for b in 0..2 {
        let xs = to_vec(&x.get(b).unwrap());
        let reference = depthwise_ref(&xs, 6, h, w, &kernels, &bias);
        for (a, r) in out[b * 150..(b + 1) * 150].iter().zip(&reference) {
            assert!((a - r).abs() <= 1e-6);
        }
    }
    // f32 path against the same oracle
    let out32 = to_vec(&depthwise3x3(
        &x.get(0).unwrap().unsqueeze(0).unwrap().narrow(1, 0, 2).unwrap().to_dtype(DType::F32).unwrap(),
        &block.branches[0].0.to_dtype(DType::F32).unwrap(),
        &block.branches[0].1.to_dtype(DType::F32).unwrap(),
    )
    .unwrap());
    let reference = depthwise_ref(&to_vec(&x.get(0).unwrap())[..50], 2, h, w, &kernels[..2], &bias[..2]);
    for (a, r) in out32.iter().zip(&reference) {
        assert!((a - r).abs() <= 1e-6);
    }
}

#[test]
fn delta_kernels_give_exact_identity_and_constants_stay_constant() {
    let mut s = store(25);
    let block = InceptionBlock::new(&mut s.root(), 9).unwrap();
    set_delta_kernels(&s, "", 3);
    let x = uniform(&[1, 9, 6, 7], -1.0, 1.0, 26, DType::F64);
    assert_eq!(to_vec(&block.forward(&x).unwrap()), to_vec(&x));

    // kernels summing to one keep a constant map constant, borders included
    for g in 0..3 {
        let mut k = common::uniform_vec(27, 0.0, 1.0, 30 + g);
        for c in 0..3 {
            let total: f64 = k[c * 9..(c + 1) * 9].iter().sum();
            k[c * 9..(c + 1) * 9].iter_mut().for_each(|v| *v /= total);
        }
        set(&s, &format!("branch{g}.weight"), k);
    }
    let c = (Tensor::ones((1, 9, 6, 7), DType::F64, &Device::Cpu).unwrap() * 0.42).unwrap();
    for v in to_vec(&block.forward(&c).unwrap()) {
        assert!((v - 0.42).abs() < 1e-12);
    }
    assert!(InceptionBlock::new(&mut s.root().pp("bad"), 8).is_err());
}

#[test]
fn flaff_matches_sequential_oracle() {
    let (dim, hidden, h, w) = (6, 12, 4, 4);
    let mut s = store(27);
    let f = Flaff::new(&mut s.root(), dim, hidden).unwrap();
    randomize(&s, 0.5, 27);
    let x = uniform(&[1, h, w, dim], -1.0, 1.0, 28, DType::F64);
    let out = map_rows(&f.forward(&x).unwrap());
    // (1) pointwise expansion with GELU
    let up: Vec<Vec<f64>> = map_rows(&x)
        .iter()
        .map(|t| {
            affine(&rows(&f.up.weight), &to_vec(&f.up.bias), t)
                .into_iter()
                .map(gelu)
                .collect()
        })
        .collect();
    // (2) to a channels-first map, (3) inception with GELU
    let mut chw = vec![0.0; hidden * h * w];
    for (p, t) in up.iter().enumerate() {
        for (c, v) in t.iter().enumerate() {
            chw[c * h * w + p] = *v;
        }
    }
    let (kernels, bias) = inception_kernels(&f.inception);
    let mixed = depthwise_ref(&chw, hidden, h, w, &kernels, &bias);
    // (4) flatten and project down
    let reference: Vec<Vec<f64>> = (0..h * w)
        .map(|p| {
            let t: Vec<f64> = (0..hidden).map(|c| gelu(mixed[c * h * w + p])).collect();
            affine(&rows(&f.down.weight), &to_vec(&f.down.bias), &t)
        })
        .collect();
    assert_close(&out, &reference, 1e-6);
    assert!(Flaff::new(&mut s.root().pp("bad"), 6, 10).is_err());
}

#[test]
fn flaff_zero_projection_and_identity_construction() {
    let dim = 6;
    let mut s = store(29);
    let f = Flaff::new(&mut s.root(), dim, dim).unwrap();
    randomize(&s, 0.5, 29);
    set(&s, "down.weight", vec![0.0; dim * dim]);
    set(&s, "down.bias", vec![0.0; dim]);
    let x = uniform(&[1, 4, 4, dim], -1.0, 1.0, 30, DType::F64);
    assert!(to_vec(&f.forward(&x).unwrap()).iter().all(|&v| v == 0.0));

    let mut eye = vec![0.0; dim * dim];
    for i in 0..dim {
        eye[i * dim + i] = 1.0;
    }
    set(&s, "up.weight", eye.clone());
    set(&s, "up.bias", vec![0.0; dim]);
    set(&s, "down.weight", eye);
    set_delta_kernels(&s, "inception.", 2);
    // the pointwise stages are exact identities, so only the two GELUs remain
    let out = to_vec(&f.forward(&x).unwrap());
    for (a, v) in out.iter().zip(to_vec(&x)) {
        assert!((a - gelu(gelu(v))).abs() < 1e-10, "{a} vs {} from {v}", gelu(gelu(v)));
    }
    // GELU is the identity up to 1e-8 relative on large positive tokens
    let big = uniform(&[1, 4, 4, dim], 7.0, 12.0, 31, DType::F64);
    for (a, v) in to_vec(&f.forward(&big).unwrap()).iter().zip(to_vec(&big)) {
        assert!((a - v).abs() / v < 1e-8);
    }
}

#[test]
fn merge_and_split_shapes() {
    let mut s = store(31);
    let merge = PatchMerge::new(&mut s.root().pp("m"), 4).unwrap();
    let split = PatchSplit::new(&mut s.root().pp("s"), 8).unwrap();
    let x = TokenMap::from_image(&uniform(&[1, 4, 8, 8], -1.0, 1.0, 32, DType::F64)).unwrap();
    let merged = merge.forward(&x).unwrap();
    assert_eq!(merged.to_image().unwrap().dims(), &[1, 8, 4, 4]);
    let back = split.forward(&merged).unwrap();
    assert_eq!(back.dims(), x.dims());
    let odd = TokenMap::new(Tensor::zeros((1, 3, 4, 4), DType::F64, &Device::Cpu).unwrap()).unwrap();
    assert!(merge.forward(&odd).is_err());
}

/// Rows of a random `r x n` matrix made orthonormal by Gram-Schmidt.
fn orthonormal_rows(r: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let raw = common::uniform_vec(r * n, -1.0, 1.0, seed);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for row in raw.chunks(n) {
        let mut v = row.to_vec();
        for q in &out {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push(v.iter().map(|a| a / norm).collect());
    }
    out
}

#[test]
fn split_with_pseudo_inverse_weights_undoes_merge() {
    let c = 4;
    let mut s = store(33);
    let merge = PatchMerge::new(&mut s.root().pp("m"), c).unwrap();
    let split = PatchSplit::new(&mut s.root().pp("s"), 2 * c).unwrap();
    // R (2C x 4C) with orthonormal rows has pseudo-inverse R^T
    let r = orthonormal_rows(2 * c, 4 * c, 34);
    let bias = common::uniform_vec(2 * c, -1.0, 1.0, 35);
    set(&s, "m.reduction.weight", r.concat());
    set(&s, "m.reduction.bias", bias.clone());
    let mut rt = vec![0.0; 4 * c * 2 * c];
    for i in 0..2 * c {
        for j in 0..4 * c {
            rt[j * 2 * c + i] = r[i][j];
        }
    }
    let back_bias: Vec<f64> = (0..4 * c).map(|j| -(0..2 * c).map(|i| r[i][j] * bias[i]).sum::<f64>()).collect();
    set(&s, "s.expansion.weight", rt);
    set(&s, "s.expansion.bias", back_bias);
    // a random map whose 2x2 groups lie in the row space of R
    let coeffs = uniform(&[1, 4, 4, 2 * c], -1.0, 1.0, 36, DType::F64);
    let groups = coeffs
        .matmul(&Tensor::new(r.clone(), &Device::Cpu).unwrap().unsqueeze(0).unwrap().unsqueeze(0).unwrap().broadcast_as((1, 4, 2 * c, 4 * c)).unwrap().contiguous().unwrap())
        .unwrap();
    let x = TokenMap::new(PatchSplit::scatter_groups(&groups).unwrap()).unwrap();
    let round = split.forward(&merge.forward(&x).unwrap()).unwrap();
    assert!(max_abs_diff(&round.data, &x.data) <= 1e-5);
    assert_eq!(to_vec(&PatchMerge::gather_groups(&x.data).unwrap()), to_vec(&groups));
}

#[test]
fn encoders_and_decoders_preserve_shapes_for_every_family() {
    for family in TransformFamily::ALL {
        let cfg = TransformConfig::desk(family, 2, 3);
        assert_eq!(cfg.downsample_factor(), 16);
        let mut s = ParamStore::new(1, DType::F32);
        let enc = build_encoder(&mut s.root().pp("enc"), &cfg).unwrap();
        let dec = build_decoder(&mut s.root().pp("dec"), &TransformConfig { in_channels: 2, out_channels: 2, ..cfg.clone() }).unwrap();
        let x = uniform(&[2, 2, 128, 64], 0.0, 1.0, 40, DType::F32);
        let y = enc.forward(&x).unwrap();
        assert_eq!(y.dims(), &[2, 32, 8, 4], "{family}");
        assert_eq!(dec.forward(&y).unwrap().dims(), x.dims(), "{family}");
        assert!(enc.forward(&uniform(&[1, 2, 40, 32], 0.0, 1.0, 1, DType::F32)).is_err());
    }
}

#[test]
fn patch_four_with_three_stages_downsamples_by_sixteen() {
    let cfg = TransformConfig {
        patch_size: 4,
        stage_depths: vec![2, 2, 2],
        num_heads: vec![2, 4, 8],
        ..TransformConfig::desk(TransformFamily::Swin, 1, 1)
    };
    cfg.validate().unwrap();
    assert_eq!(cfg.downsample_factor(), 16);
    let mut s = ParamStore::new(2, DType::F32);
    let enc = build_encoder(&mut s.root(), &cfg).unwrap();
    let y = enc.forward(&uniform(&[1, 1, 64, 64], 0.0, 1.0, 41, DType::F32)).unwrap();
    assert_eq!(y.dims(), &[1, 32, 4, 4]);
}

#[test]
fn flaff_adds_nine_ce_depthwise_parameters() {
    let dim = 16;
    let cfg = swin_cfg(TransformFamily::Swin);
    assert_eq!(cfg.mlp_ratio, cfg.flaff_expansion);
    let ce = cfg.flaff_hidden(dim);
    let mut swin = store(1);
    SwinBlockPair::new(&mut swin.root(), &cfg, dim, 2).unwrap();
    let mut flawin = store(1);
    SwinBlockPair::new(&mut flawin.root(), &swin_cfg(TransformFamily::Flawin), dim, 2).unwrap();
    let extra = flawin.num_scalars() - swin.num_scalars();
    // two blocks per pair, each with 9 C_e kernel taps and C_e biases
    assert_eq!(extra, 2 * (9 * ce + ce));
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut s = store(43);
    let attn = WindowAttention::new(&mut s.root(), 4, 2, 2).unwrap();
    randomize(&s, 0.5, 43);
    let x = uniform(&[1, 4, 4], -1.0, 1.0, 44, DType::F64);
    let wts = uniform(&[1, 4, 4], -1.0, 1.0, 45, DType::F64);
    let err = grad_check(
        &[x, attn.bias_table.clone(), attn.qkv.weight.clone()],
        |t| {
            let mut a = attn.clone();
            a.bias_table = t[1].clone();
            a.qkv.weight = t[2].clone();
            (a.forward(&t[0], None).unwrap() * &wts).unwrap().sum_all().unwrap()
        },
        1e-6,
    );
    assert!(err <= 1e-4, "relative error {err}");

    // masked, shifted windows over a 4x4 map (16 tokens)
    let cfg = TransformConfig {
        window_size: 2,
        ..swin_cfg(TransformFamily::Swin)
    };
    let mut s = store(46);
    let pair = SwinBlockPair::new(&mut s.root(), &cfg, 4, 2).unwrap();
    randomize(&s, 0.5, 46);
    let x = uniform(&[1, 4, 4, 4], -1.0, 1.0, 47, DType::F64);
    let wts = uniform(&[1, 4, 4, 4], -1.0, 1.0, 48, DType::F64);
    let err = grad_check(
        &[x],
        |t| {
            (pair.shifted.attention_branch(&t[0]).unwrap() * &wts)
                .unwrap()
                .sum_all()
                .unwrap()
        },
        1e-6,
    );
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn flaff_and_inception_gradients_match_finite_differences() {
    let mut s = store(49);
    let f = Flaff::new(&mut s.root(), 6, 12).unwrap();
    randomize(&s, 0.5, 49);
    let x = uniform(&[1, 4, 4, 6], -1.0, 1.0, 50, DType::F64);
    let wts = uniform(&[1, 4, 4, 6], -1.0, 1.0, 51, DType::F64);
    let err = grad_check(
        &[x, f.inception.branches[1].0.clone(), f.up.weight.clone()],
        |t| {
            let mut g = f.clone();
            g.inception.branches[1].0 = t[1].clone();
            g.up.weight = t[2].clone();
            (g.forward(&t[0]).unwrap() * &wts).unwrap().sum_all().unwrap()
        },
        1e-6,
    );
    assert!(err <= 1e-4, "flaff relative error {err}");

    let block = f.inception.clone();
    let x = uniform(&[1, 12, 4, 4], -1.0, 1.0, 52, DType::F64);
    let wts = uniform(&[1, 12, 4, 4], -1.0, 1.0, 53, DType::F64);
    let err = grad_check(
        &[x, block.branches[0].0.clone(), block.branches[2].1.clone()],
        |t| {
            let mut b = block.clone();
            b.branches[0].0 = t[1].clone();
            b.branches[2].1 = t[2].clone();
            (b.forward(&t[0]).unwrap() * &wts).unwrap().sum_all().unwrap()
        },
        1e-6,
    );
    assert!(err <= 1e-4, "inception relative error {err}");
}
