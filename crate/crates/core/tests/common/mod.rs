#![allow(dead_code)]

pub mod oracles;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64, dtype: DType) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(uniform_vec(n, lo, hi, seed), shape, &Device::Cpu)
        .unwrap()
        .to_dtype(dtype)
        .unwrap()
}

pub fn to_vec(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64)
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1()
        .unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims());
    to_vec(a)
        .iter()
        .zip(to_vec(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Compares the autograd gradient of the scalar `f` at each input against
/// central differences. Inputs must be f64. Returns the worst relative error.
pub fn grad_check(inputs: &[Tensor], f: impl Fn(&[Tensor]) -> Tensor, step: f64) -> f64 {
    let vars: Vec<Var> = inputs.iter().map(|t| Var::from_tensor(t).unwrap()).collect();
    let tensors: Vec<Tensor> = vars.iter().map(|v| v.as_tensor().clone()).collect();
    let grads = f(&tensors).backward().unwrap();
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = match grads.get(v.as_tensor()) {
            Some(g) => to_vec(g),
            None => vec![0.0; v.elem_count()],
        };
        let base = to_vec(v.as_tensor());
        let mut numeric = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut vals = base.clone();
                vals[i] += delta;
                let moved = Tensor::from_vec(vals, v.dims(), &Device::Cpu).unwrap();
                let args: Vec<Tensor> = tensors
                    .iter()
                    .enumerate()
                    .map(|(j, t)| if j == k { moved.clone() } else { t.detach() })
                    .collect();
                scalar(&f(&args))
            };
            numeric.push((eval(step) - eval(-step)) / (2.0 * step));
        }
        let scale = analytic.iter().map(|a| a.abs()).fold(0.0, f64::max);
        worst = worst.max(relative_error(&analytic, &numeric, 1e-3 * scale.max(1e-12)));
    }
    worst
}
