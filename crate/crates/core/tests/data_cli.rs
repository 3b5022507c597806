use std::path::Path;
use std::process::Command;

use candle_core::DType;
use ssf_codec::checkpoint::{self, TrainingRecord};
use ssf_codec::codec::{compress_gop, GopPlan, ModelConfig, SsfModel};
use ssf_codec::data::{gen_synthetic, list_frame_files, load_dataset, read_frame, write_frames, ChunkMode, Frame};
use ssf_codec::eval::{eval_model, points_from_csv, points_to_csv, EvalOptions, EvalReport, RdPoint};
use ssf_codec::metrics::{bpp, capped, mse, psnr, psnr_from_mse, PSNR_CAP_DB};
use ssf_codec::transforms::TransformFamily;
use ssf_codec::Error;

fn save_luma8(path: &Path, w: u32, h: u32, px: Vec<u8>) {
    image::ImageBuffer::<image::Luma<u8>, _>::from_raw(w, h, px).unwrap().save(path).unwrap();
}

fn save_luma16(path: &Path, w: u32, h: u32, px: Vec<u16>) {
    image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, px).unwrap().save(path).unwrap();
}

/// Version 1.0 `.npy` container written by hand.
fn npy_bytes(descr: &str, shape: &str, data: &[u8]) -> Vec<u8> {
    let mut header = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}");
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend((header.len() as u16).to_le_bytes());
    out.extend(header.as_bytes());
    out.extend(data);
    out
}

fn ssf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssf"))
}

#[test]
fn png_depths_are_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let p8 = dir.path().join("a.png");
    save_luma8(&p8, 2, 1, vec![0, 255]);
    assert_eq!(read_frame(&p8).unwrap().data, vec![0.0, 1.0]);
    let p16 = dir.path().join("b.png");
    save_luma16(&p16, 3, 1, vec![0, 32768, 65535]);
    let f = read_frame(&p16).unwrap();
    assert_eq!(f.data[2], 1.0);
    assert_eq!(f.data[1], 32768.0 / 65535.0);
    assert_eq!((f.channels, f.height, f.width), (1, 1, 3));

    let rgb = dir.path().join("c.png");
    image::RgbImage::new(2, 2).save(&rgb).unwrap();
    assert!(matches!(read_frame(&rgb), Err(Error::Data(_))));
}

#[test]
fn npy_frames_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.npy");
    let values = [0.0f32, 0.25, 0.5, 0.75, 1.0, 0.125];
    std::fs::write(&path, npy_bytes("<f4", "(2, 3)", &values.map(f32::to_le_bytes).concat())).unwrap();
    let f = read_frame(&path).unwrap();
    assert_eq!((f.height, f.width), (2, 3));
    assert_eq!(f.data, values.to_vec());
    assert_eq!(f.at(0, 1, 0), 0.75);

    let p16 = dir.path().join("g.npy");
    std::fs::write(&p16, npy_bytes("<u2", "(1, 2)", &[0, 0, 255, 255])).unwrap();
    assert_eq!(read_frame(&p16).unwrap().data, vec![0.0, 1.0]);
    let bad = dir.path().join("h.npy");
    std::fs::write(&bad, npy_bytes("<f4", "(1, 1)", &2.0f32.to_le_bytes())).unwrap();
    assert!(matches!(read_frame(&bad), Err(Error::Data(_))));
}

#[test]
fn files_are_ordered_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["f10.png", "f02.png", "f01.png", "f03.png", "notes.txt"];
    for (i, n) in names.iter().enumerate() {
        if n.ends_with(".png") {
            save_luma8(&dir.path().join(n), 1, 1, vec![i as u8]);
        } else {
            std::fs::write(dir.path().join(n), "x").unwrap();
        }
    }
    let listed: Vec<String> = list_frame_files(dir.path())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(listed, ["f01.png", "f02.png", "f03.png", "f10.png"]);
    let ds = load_dataset(dir.path(), ChunkMode::Test).unwrap();
    let firsts: Vec<f32> = ds.frames.iter().map(|f| f.data[0] * 255.0).collect();
    assert_eq!(firsts, [2.0, 1.0, 3.0, 0.0]);
}

#[test]
fn loader_errors_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path(), ChunkMode::Train), Err(Error::Data(_))));
    assert!(matches!(
        load_dataset(dir.path().join("missing"), ChunkMode::Train),
        Err(Error::Data(_))
    ));
    save_luma8(&dir.path().join("a.png"), 4, 4, vec![0; 16]);
    save_luma8(&dir.path().join("b.png"), 4, 2, vec![0; 8]);
    let err = load_dataset(dir.path(), ChunkMode::Train).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("b.png"), "{err}");
}

#[test]
fn written_frames_read_back_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let frames = gen_synthetic(3, 16, 1).unwrap().frames;
    write_frames(&frames, dir.path()).unwrap();
    let back = load_dataset(dir.path(), ChunkMode::Test).unwrap();
    for (a, b) in frames.iter().zip(&back.frames) {
        let err = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0f32, f32::max);
        assert!(err <= 0.5 / 65535.0 + 1e-7);
    }
}

#[test]
fn synthetic_frames_are_temporally_correlated() {
    let ds = gen_synthetic(10, 64, 2).unwrap();
    assert_eq!(ds.frames, gen_synthetic(10, 64, 2).unwrap().frames);
    assert_ne!(ds.frames, gen_synthetic(10, 64, 3).unwrap().frames);
    let adjacent = ds.frames[0].mean_abs_diff(&ds.frames[1]);
    let far = gen_synthetic(1, 64, 4).unwrap().frames[0].mean_abs_diff(&ds.frames[0]);
    assert!(adjacent > 0.0);
    assert!(adjacent < 0.25 * far, "{adjacent} vs {far}");
    assert!(ds.frames.iter().all(|f| f.data.iter().all(|v| (0.0..=1.0).contains(v))));
}

#[test]
fn psnr_and_bpp_match_definitions() {
    let a = Frame::new(1, 2, 2, vec![0.0, 0.5, 1.0, 0.25]).unwrap();
    let b = Frame::new(1, 2, 2, vec![0.1, 0.5, 0.8, 0.25]).unwrap();
    let expected = ((0.1f32 as f64).powi(2) + (1.0 - 0.8f32 as f64).powi(2)) / 4.0;
    assert!((mse(&a, &b).unwrap() - expected).abs() < 1e-9);
    assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / expected).log10()).abs() < 1e-9);
    assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    assert_eq!(capped(f64::INFINITY), PSNR_CAP_DB);
    assert!(mse(&a, &Frame::filled(1, 1, 4, 0.0)).is_err());

    let dir = tempfile::tempdir().unwrap();
    let model = SsfModel::new(ModelConfig::desk(TransformFamily::Conv), 1, DType::F32).unwrap();
    let frames = gen_synthetic(3, 64, 5).unwrap().frames;
    let c = compress_gop(&frames, &model, &GopPlan::default()).unwrap();
    let path = dir.path().join("s.ssfv");
    std::fs::write(&path, &c.bytes).unwrap();
    let size = std::fs::metadata(&path).unwrap().len() as f64;
    assert_eq!(bpp(c.bytes.len(), 3, 64, 64, true), 8.0 * size / (3.0 * 64.0 * 64.0));
    assert_eq!(bpp(c.bytes.len(), 3, 64, 64, false), 8.0 * (size - 31.0) / (3.0 * 64.0 * 64.0));
}

#[test]
fn eval_report_counts_every_frame() {
    let model = SsfModel::new(ModelConfig::desk(TransformFamily::Conv), 2, DType::F32).unwrap();
    let ds = gen_synthetic(5, 64, 6).unwrap().with_mode(ChunkMode::Test);
    let opts = EvalOptions {
        plan: GopPlan::new(2).unwrap(),
        clip_len: 3,
        lambda: 0.04,
        ..EvalOptions::default()
    };
    let r = eval_model(&model, &ds, &opts).unwrap();
    assert_eq!(r.clips, 2);
    assert_eq!(r.frames.len(), 5);
    let kinds: String = r.frames.iter().map(|f| f.kind.as_str()).collect();
    assert_eq!(kinds, "IPIIP");
    let bits: usize = r.frames.iter().map(|f| f.bits).sum();
    assert_eq!(8 * r.total_bytes, bits + 2 * 8 * 31);
    assert!((r.point.bpp - 8.0 * r.total_bytes as f64 / (5.0 * 64.0 * 64.0)).abs() < 1e-12);

    let points = vec![
        r.point.clone(),
        RdPoint {
            family: "swin".into(),
            lambda: 0.02,
            bpp: 0.5,
            psnr_db: 30.0,
            digest: "ab".into(),
        },
    ];
    assert_eq!(points_from_csv(&points_to_csv(&points)).unwrap(), points);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let unknown = EvalReport {
        point: RdPoint { lambda: f64::NAN, ..r.point.clone() },
        ..r
    };
    unknown.save(&path).unwrap();
    assert!(EvalReport::load(&path).unwrap().point.lambda.is_nan());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(ssf().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(ssf().arg("--help").status().unwrap().code(), Some(0));

    let data = d.join("frames");
    let st = ssf()
        .args(["gen-data", "--frames", "3", "--size", "64", "--seed", "1", "--out"])
        .arg(&data)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(list_frame_files(&data).unwrap().len(), 3);

    let empty = d.join("empty");
    std::fs::create_dir(&empty).unwrap();
    let ckpt = d.join("m.safetensors");
    let model = SsfModel::new(ModelConfig::desk(TransformFamily::Conv), 3, DType::F32).unwrap();
    checkpoint::save(&model, &TrainingRecord::default(), &ckpt).unwrap();
    let out = |args: &[&str], paths: &[&Path]| {
        let mut c = ssf();
        c.args(args);
        for p in paths {
            c.arg(p);
        }
        c.output().unwrap()
    };
    let st = ssf().args(["compress", "--gop", "2", "--ckpt"]).arg(&ckpt).arg("--data").arg(&empty).arg("--out").arg(d.join("x.ssfv")).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = ssf().args(["compress", "--gop", "0", "--ckpt"]).arg(&ckpt).arg("--data").arg(&data).arg("--out").arg(d.join("x.ssfv")).status().unwrap();
    assert_eq!(st.code(), Some(1));

    let stream = d.join("s.ssfv");
    let st = ssf().args(["compress", "--gop", "2", "--ckpt"]).arg(&ckpt).arg("--data").arg(&data).arg("--out").arg(&stream).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let decoded = d.join("decoded");
    let o = out(&["decompress", "--ckpt"], &[&ckpt]);
    assert_eq!(o.status.code(), Some(1));
    let st = ssf().args(["decompress", "--ckpt"]).arg(&ckpt).arg("--in").arg(&stream).arg("--out").arg(&decoded).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(list_frame_files(&decoded).unwrap().len(), 3);

    let mut bytes = std::fs::read(&stream).unwrap();
    let n = bytes.len();
    bytes[n - 10] ^= 0xff;
    let bad = d.join("bad.ssfv");
    std::fs::write(&bad, &bytes).unwrap();
    let o = ssf().args(["decompress", "--ckpt"]).arg(&ckpt).arg("--in").arg(&bad).arg("--out").arg(d.join("bad")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame 2"));

    let other = d.join("other.safetensors");
    let foreign = SsfModel::new(ModelConfig::desk(TransformFamily::Conv), 4, DType::F32).unwrap();
    checkpoint::save(&foreign, &TrainingRecord::default(), &other).unwrap();
    let st = ssf().args(["decompress", "--ckpt"]).arg(&other).arg("--in").arg(&stream).arg("--out").arg(d.join("o")).status().unwrap();
    assert_eq!(st.code(), Some(3));

    let report = d.join("r.json");
    let st = ssf().args(["eval", "--gop", "2", "--ckpt"]).arg(&ckpt).arg("--data").arg(&data).arg("--report").arg(&report).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(EvalReport::load(&report).unwrap().frames.len(), 3);
    let prefix = d.join("curve");
    let st = ssf().args(["rd-curve", "--reports"]).arg(d.join("*.json")).arg("--out").arg(&prefix).status().unwrap();
    assert_eq!(st.code(), Some(0));
    for ext in ["csv", "json", "svg"] {
        assert!(d.join(format!("curve.{ext}")).exists());
    }

    let cfg = d.join("bad.cfg");
    std::fs::write(&cfg, "lambda = -1\n").unwrap();
    let st = ssf().args(["train", "--config"]).arg(&cfg).arg("--data").arg(&data).arg("--out").arg(d.join("t.safetensors")).status().unwrap();
    assert_eq!(st.code(), Some(1));
}
