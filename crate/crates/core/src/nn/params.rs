//! Named, seeded parameter storage.
//!
//! Every trainable tensor in a model lives in a [`ParamStore`] under a
//! dotted path such as `iframe.g_a.stage0.pair0.wmsa.qkv.weight`. Creation
//! order is deterministic, so a store built from the same seed and config
//! always holds bitwise-identical initial values.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, Result};

pub struct ParamStore {
    dtype: DType,
    device: Device,
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            dtype,
            device: Device::Cpu,
            vars: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn root(&mut self) -> Scope<'_> {
        Scope {
            store: self,
            prefix: String::new(),
        }
    }

    /// Parameters in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrites every parameter from `values`, which must name exactly the
    /// same set of tensors with matching shapes.
    pub fn load(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        if values.len() != self.vars.len() {
            return Err(config_err!(
                "parameter table has {} entries, model expects {}",
                values.len(),
                self.vars.len()
            ));
        }
        for (name, var) in &self.vars {
            let value = values
                .get(name)
                .ok_or_else(|| config_err!("parameter `{name}` missing from table"))?;
            if value.dims() != var.dims() {
                return Err(config_err!(
                    "parameter `{name}` has shape {:?}, model expects {:?}",
                    value.dims(),
                    var.dims()
                ));
            }
            var.set(&value.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    fn insert(&mut self, name: String, values: Vec<f64>, shape: Shape) -> Result<Tensor> {
        if self.vars.contains_key(&name) {
            return Err(config_err!("duplicate parameter name `{name}`"));
        }
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name, var);
        Ok(out)
    }
}

/// A view into a [`ParamStore`] that prefixes every created name.
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    pub fn pp(&mut self, name: impl AsRef<str>) -> Scope<'_> {
        Scope {
            prefix: self.full(name.as_ref()),
            store: self.store,
        }
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }

    pub fn device(&self) -> &Device {
        &self.store.device
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn normal<S: Into<Shape>>(&mut self, name: &str, shape: S, std: f64) -> Result<Tensor> {
        let shape = shape.into();
        let rng = &mut self.store.rng;
        let values = (0..shape.elem_count())
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                v * std
            })
            .collect();
        let name = self.full(name);
        self.store.insert(name, values, shape)
    }

    pub fn uniform<S: Into<Shape>>(
        &mut self,
        name: &str,
        shape: S,
        lo: f64,
        hi: f64,
    ) -> Result<Tensor> {
        let shape = shape.into();
        let rng = &mut self.store.rng;
        let values = (0..shape.elem_count())
            .map(|_| rng.gen_range(lo..hi))
            .collect();
        let name = self.full(name);
        self.store.insert(name, values, shape)
    }

    pub fn constant<S: Into<Shape>>(&mut self, name: &str, shape: S, value: f64) -> Result<Tensor> {
        let shape = shape.into();
        let values = vec![value; shape.elem_count()];
        let name = self.full(name);
        self.store.insert(name, values, shape)
    }

    pub fn from_values<S: Into<Shape>>(
        &mut self,
        name: &str,
        shape: S,
        values: Vec<f64>,
    ) -> Result<Tensor> {
        let shape = shape.into();
        if values.len() != shape.elem_count() {
            return Err(config_err!(
                "parameter `{name}`: {} values for shape {shape:?}",
                values.len()
            ));
        }
        let name = self.full(name);
        self.store.insert(name, values, shape)
    }
}
