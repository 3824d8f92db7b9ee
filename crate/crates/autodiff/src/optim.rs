use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers mirror the parameter store
/// element for element.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = |t: &Tensor| vec![0.0; t.len()];
        Self {
            config,
            step: 0,
            m: store.iter().map(|(_, _, t)| zeros(t)).collect(),
            v: store.iter().map(|(_, _, t)| zeros(t)).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients held in `store`. Parameters
    /// without a gradient or marked non-trainable are left untouched. Fails
    /// before modifying anything if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for (_, name, t) in store.iter() {
            if let Some(g) = &t.grad {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NanGradient { name: name.to_string() });
                }
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let t = store.get_mut(id);
            if !t.requires_grad {
                continue;
            }
            let Some(g) = t.grad.as_ref() else { continue };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for k in 0..g.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                t.data[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moment buffers as named tensors (`adam.m.<name>`, `adam.v.<name>`),
    /// for checkpointing alongside the parameters.
    pub fn export(&self, store: &ParamStore) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (id, name, t) in store.iter() {
            out.insert(
                format!("adam.m.{name}"),
                Tensor::new(t.shape.clone(), self.m[id.index()].clone())?,
            )?;
            out.insert(
                format!("adam.v.{name}"),
                Tensor::new(t.shape.clone(), self.v[id.index()].clone())?,
            )?;
        }
        Ok(out)
    }

    /// Rebuilds optimizer state previously produced by [`Adam::export`].
    pub fn restore(config: AdamConfig, store: &ParamStore, state: &ParamStore, step: u64) -> Result<Self> {
        let mut adam = Self::new(config, store);
        for (id, name, t) in store.iter() {
            let m = state.get(state.id(&format!("adam.m.{name}"))?);
            let v = state.get(state.id(&format!("adam.v.{name}"))?);
            if m.shape != t.shape || v.shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "optimizer state shape mismatch for `{name}`"
                )));
            }
            adam.m[id.index()].copy_from_slice(&m.data);
            adam.v[id.index()].copy_from_slice(&v.data);
        }
        adam.step = step;
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::scalar(v)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_store(0.0);
        let id = s.id("theta").unwrap();
        s.get_mut(id).grad = Some(vec![1.0]);
        let mut adam = Adam::new(
            AdamConfig {
                lr: 1e-3,
                ..Default::default()
            },
            &s,
        );
        adam.step(&mut s).unwrap();
        let theta = s.get(id).data[0];
        assert!((theta + 1e-3).abs() < 1e-5, "theta = {theta}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = scalar_store(0.7);
        let id = s.id("theta").unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..5 {
            s.get_mut(id).grad = Some(vec![0.0]);
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.get(id).data[0], 0.7);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn quadratic_descent_converges() {
        // f(θ) = (θ − 2)², gradient 2(θ − 2)
        let mut s = scalar_store(0.0);
        let id = s.id("theta").unwrap();
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            &s,
        );
        for _ in 0..200 {
            let th = s.get(id).data[0];
            s.get_mut(id).grad = Some(vec![2.0 * (th - 2.0)]);
            adam.step(&mut s).unwrap();
        }
        assert!((s.get(id).data[0] - 2.0).abs() < 0.05);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        let id = s.id("theta").unwrap();
        s.get_mut(id).grad = Some(vec![f64::NAN]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        match adam.step(&mut s) {
            Err(Error::NanGradient { name }) => assert_eq!(name, "theta"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step_count(), 0);
        assert_eq!(s.get(id).data[0], 0.0);
    }

    #[test]
    fn export_restore_round_trip() {
        let mut s = scalar_store(1.0);
        let id = s.id("theta").unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &s);
        s.get_mut(id).grad = Some(vec![0.5]);
        adam.step(&mut s).unwrap();
        let state = adam.export(&s).unwrap();
        let restored = Adam::restore(adam.config, &s, &state, adam.step_count()).unwrap();
        assert_eq!(restored.m, adam.m);
        assert_eq!(restored.v, adam.v);
        assert_eq!(restored.step_count(), 1);
    }
}
