use rand::Rng;

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Named trainable tensors plus Adam state.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.m.push(Tensor::zeros(value.shape()));
        self.v.push(Tensor::zeros(value.shape()));
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Glorot-uniform `fan_in x fan_out` weight.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
        self.add(name, Tensor::matrix(fan_in, fan_out, data))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn moments(&self, id: ParamId) -> (&Tensor, &Tensor) {
        (&self.m[id.0], &self.v[id.0])
    }

    pub(crate) fn restore_state(
        &mut self,
        values: Vec<Tensor>,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
        step: u64,
    ) {
        self.values = values;
        self.m = m;
        self.v = v;
        self.step = step;
    }

    /// Copy values (not optimizer state) from a store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter layouts differ".into()));
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape("parameter shapes differ".into()));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: &AdamConfig) {
        assert_eq!(grads.grads.len(), self.values.len(), "gradient layout");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.values.len() {
            let g = grads.grads[i].data();
            let m = self.m[i].data_mut();
            for (m, g) in m.iter_mut().zip(g) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            }
            let v = self.v[i].data_mut();
            for (v, g) in v.iter_mut().zip(g) {
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            }
            let (m, v) = (self.m[i].data(), self.v[i].data());
            let w = self.values[i].data_mut();
            for ((w, m), v) in w.iter_mut().zip(m).zip(v) {
                *w -= cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Gradients aligned with a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Self { grads: store.values.iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub(crate) fn accumulate(&mut self, index: usize, g: &[f64]) {
        for (d, s) in self.grads[index].data_mut().iter_mut().zip(g) {
            *d += s;
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            self.accumulate(i, g.data());
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }
}
