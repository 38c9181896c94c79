use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One named parameter tensor with its gradient accumulator and Adam state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Param {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != value.len() {
            return Err(Error::shape(format!(
                "param shape {:?} needs {} values, got {}",
                shape,
                n,
                value.len()
            )));
        }
        Ok(Param {
            shape,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            value,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::config("adam: lr must be > 0"));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::config("adam: betas must be in (0,1)"));
        }
        Ok(())
    }

    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Named parameter tensors. Iteration order is the sorted name order, which
/// keeps checkpoints and gradient checks deterministic.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, value: Vec<f64>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        self.params.insert(name.to_string(), Param::new(shape, value)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> &Param {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn value(&self, name: &str) -> &[f64] {
        &self.get(name).value
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Accumulate `delta` into the gradient buffer of `name`.
    pub fn add_grad(&mut self, name: &str, delta: &[f64]) {
        let p = self.get_mut(name);
        debug_assert_eq!(p.grad.len(), delta.len(), "grad shape for {name}");
        for (g, d) in p.grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Scale the gradient buffers of the named parameters.
    pub fn scale_grads(&mut self, names: &[String], factor: f64) {
        for name in names {
            for g in self.get_mut(name).grad.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    /// Bias-corrected Adam update on the named subset; gradients of the
    /// updated parameters are zeroed afterward. `t` is 1-based.
    pub fn adam_step(&mut self, names: &[String], cfg: &AdamConfig, t: u64) -> Result<()> {
        cfg.validate()?;
        if t == 0 {
            return Err(Error::config("adam: step index must be >= 1"));
        }
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for name in names {
            let p = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::config(format!("unknown parameter {name}")))?;
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                p.value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                p.grad[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Named tensors as (name, shape, little-endian f32 payload), in sorted
    /// name order. This is the checkpoint wire form.
    pub fn to_f32_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        self.params
            .iter()
            .map(|(name, p)| {
                (
                    name.clone(),
                    p.shape.clone(),
                    p.value.iter().map(|&x| x as f32).collect(),
                )
            })
            .collect()
    }

    /// Overwrite parameter values from checkpoint tensors.
    pub fn load_f32_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        for (name, shape, data) in tensors {
            let p = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::data(format!("checkpoint has unknown tensor {name}")))?;
            if &p.shape != shape {
                return Err(Error::shape(format!(
                    "tensor {name}: expected shape {:?}, checkpoint has {:?}",
                    p.shape, shape
                )));
            }
            for (v, &x) in p.value.iter_mut().zip(data) {
                *v = x as f64;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut store = ParamStore::new();
        store.insert("w", vec![2], vec![1.0, -2.0]).unwrap();
        let names = store.names();
        store.adam_step(&names, &AdamConfig::default(), 1).unwrap();
        assert_eq!(store.value("w"), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // bias correction makes the first update lr * sign(g) up to eps
        let mut store = ParamStore::new();
        store.insert("w", vec![1], vec![1.0]).unwrap();
        store.add_grad("w", &[2.0]);
        let cfg = AdamConfig::with_lr(1e-3);
        store.adam_step(&store.names(), &cfg, 1).unwrap();
        let v = store.value("w")[0];
        assert!((v - (1.0 - 1e-3)).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn per_parameter_state_is_isolated() {
        let mut store = ParamStore::new();
        store.insert("a", vec![1], vec![1.0]).unwrap();
        store.insert("b", vec![1], vec![1.0]).unwrap();
        store.add_grad("a", &[1.0]);
        store
            .adam_step(&["a".to_string()], &AdamConfig::default(), 1)
            .unwrap();
        let b = store.get("b");
        assert_eq!(b.value, vec![1.0]);
        assert_eq!(b.m, vec![0.0]);
        assert_eq!(b.v, vec![0.0]);
    }

    #[test]
    fn gradients_zeroed_after_step() {
        let mut store = ParamStore::new();
        store.insert("w", vec![1], vec![0.5]).unwrap();
        store.add_grad("w", &[3.0]);
        store
            .adam_step(&store.names(), &AdamConfig::default(), 1)
            .unwrap();
        assert_eq!(store.get("w").grad, vec![0.0]);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut store = ParamStore::new();
        store.insert("w", vec![1], vec![0.0]).unwrap();
        assert!(store.insert("w", vec![1], vec![0.0]).is_err());
    }
}
