//! AdamW: adaptive moments with decoupled weight decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Binding, ParamSet};
use crate::tensor::GradStore;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamWConfig {
    pub fn with_lr(lr: f32) -> Self {
        AdamWConfig { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

/// Optimizer state is keyed by parameter name so it checkpoints alongside
/// the parameters themselves.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct AdamW {
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update to every trainable parameter in `binding` using the
    /// gradients from `grads`. Parameters the loss did not reach receive a
    /// zero gradient (decay still applies). Errors on non-finite gradients.
    pub fn step(
        &mut self,
        cfg: &AdamWConfig,
        params: &mut ParamSet,
        binding: &Binding,
        grads: &GradStore,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - (cfg.beta1 as f64).powf(t);
        let bc2 = 1.0 - (cfg.beta2 as f64).powf(t);
        for (name, leaf) in binding.iter() {
            if !leaf.is_requires_grad() {
                continue;
            }
            let g = grads.get_or_zeros(leaf);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: "adamw",
                    detail: format!("gradient for {name}"),
                });
            }
            let entry = params.get(name)?;
            let n = entry.values.len();
            let state = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let mut values = entry.values.clone();
            for i in 0..n {
                let gi = g[i];
                state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
                state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = state.m[i] as f64 / bc1;
                let v_hat = state.v[i] as f64 / bc2;
                let update = m_hat / (v_hat.sqrt() + cfg.eps as f64);
                let decayed = values[i] as f64 * (1.0 - cfg.lr as f64 * cfg.weight_decay as f64);
                values[i] = (decayed - cfg.lr as f64 * update) as f32;
            }
            params.set_values(name, values)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    /// Minimizing (x - 3)^2 converges near 3.
    #[test]
    fn adamw_minimizes_quadratic() {
        let mut params = ParamSet::new();
        params.insert("x", &[1], vec![0.0]);
        let mut opt = AdamW::new();
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        for _ in 0..200 {
            let b = params.bind(|_| true);
            let x = b.get("x").unwrap();
            let loss = x.add_scalar(-3.0).unwrap().sqr().unwrap().sum_all().unwrap();
            let grads = loss.backward().unwrap();
            opt.step(&cfg, &mut params, &b, &grads).unwrap();
        }
        let x = params.get("x").unwrap().values[0];
        assert!((x - 3.0).abs() < 0.05, "x = {x}");
    }

    #[test]
    fn frozen_params_untouched() {
        let mut params = ParamSet::new();
        params.insert("frozen.w", &[2], vec![1.0, 2.0]);
        params.insert("train.w", &[2], vec![1.0, 2.0]);
        let before = params.get("frozen.w").unwrap().values.clone();
        let mut opt = AdamW::new();
        let b = params.bind(|n| n.starts_with("train."));
        let fw = b.get("frozen.w").unwrap().clone();
        let tw = b.get("train.w").unwrap().clone();
        let loss = fw.mul(&tw).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        opt.step(&AdamWConfig::default(), &mut params, &b, &grads).unwrap();
        assert_eq!(params.get("frozen.w").unwrap().values, before);
        assert_ne!(params.get("train.w").unwrap().values, vec![1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        // Forward values stay finite but the chain-rule product overflows.
        let mut params = ParamSet::new();
        params.insert("x", &[1], vec![1.0e-25]);
        let mut opt = AdamW::new();
        let b = params.bind(|_| true);
        let x = b.get("x").unwrap();
        let big = Tensor::scalar(1.0e30);
        let loss = x.mul(&big).unwrap().mul(&big).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let err = opt.step(&AdamWConfig::default(), &mut params, &b, &grads);
        assert!(err.is_err());
    }
}
