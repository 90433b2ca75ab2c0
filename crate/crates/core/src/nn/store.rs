use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::noise::RngSeed;

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Buffers (e.g. running statistics) are saved but never optimized.
    pub trainable: bool,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameters, their gradients and Adam moments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
    adam: AdamConfig,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
            adam: AdamConfig::default(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        let n = value.len();
        self.params.push(Param {
            name: name.to_string(),
            grad: Tensor::zeros(value.shape()),
            value,
            trainable,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.index.insert(name.to_string(), id);
        id
    }

    /// Adds a trainable tensor drawn from `N(0, 2/fan_in)`.
    pub fn add_he(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: RngSeed) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let mut rng = seed.rng();
        let data = (0..shape.iter().product::<usize>())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            })
            .collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape"), true)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn set_adam(&mut self, adam: AdamConfig) {
        self.adam = adam;
    }

    /// One bias-corrected Adam update of every trainable parameter.
    pub fn adam_step(&mut self, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for j in 0..value.len() {
                let g = grad[j];
                p.m[j] = beta1 * p.m[j] + (1.0 - beta1) * g;
                p.v[j] = beta2 * p.v[j] + (1.0 - beta2) * g * g;
                let m_hat = p.m[j] / c1;
                let v_hat = p.v[j] / c2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Every tensor by name, in insertion order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrites values from `(name, tensor)` pairs. Every parameter must be present
    /// with a matching shape; unknown names are ignored.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        let lookup: HashMap<&str, &Tensor> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for p in &mut self.params {
            let t = lookup
                .get(p.name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{}'", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{}' has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = (*t).clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let id = store.add_he("w", &[3, 4], 4, RngSeed(1));
        let before = store.value(id).clone();
        store.adam_step(0.1);
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::zeros(&[1]), true);
        for _ in 0..500 {
            let theta = store.value(id).data()[0];
            store.grad_mut(id).data_mut()[0] = 2.0 * (theta - 3.0);
            store.adam_step(0.05);
        }
        let theta = store.value(id).data()[0];
        assert!((theta - 3.0).abs() < 0.01, "theta {theta}");
    }

    #[test]
    fn buffers_are_not_optimized() {
        let mut store = ParamStore::new();
        let id = store.add("running", Tensor::filled(&[2], 1.0), false);
        store.grad_mut(id).data_mut()[0] = 5.0;
        store.adam_step(0.1);
        assert_eq!(store.value(id).data(), &[1.0, 1.0]);
        assert_eq!(store.num_trainable(), 0);
    }

    #[test]
    fn same_seed_same_init() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let ia = a.add_he("w", &[5, 5], 5, RngSeed(9));
        let ib = b.add_he("w", &[5, 5], 5, RngSeed(9));
        assert_eq!(a.value(ia), b.value(ib));
    }
}
