//! First-order optimizers over named parameter tensors.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named parameters, iterated in name order.
pub type Params = BTreeMap<String, Array2<f64>>;

fn check(params: &Params, grads: &Params) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("gradient for unknown parameter `{name}`")))?;
        if p.dim() != g.dim() {
            return Err(Error::dim("optimizer step", format!("`{name}`: {:?} vs {:?}", p.dim(), g.dim())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    Ok(())
}

/// `p <- p - lr * g`. Parameters without a gradient are left alone.
pub fn sgd_step(params: &mut Params, grads: &Params, lr: f64) -> Result<()> {
    check(params, grads)?;
    for (name, g) in grads {
        params.get_mut(name).unwrap().scaled_add(-lr, g);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam with bias correction. Moment buffers are created lazily per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Params,
    pub v: Params,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, ..Default::default() }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        check(params, grads)?;
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| Array2::zeros(p.raw_dim()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Array2::zeros(p.raw_dim()));
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g + weight_decay * *p;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
        Ok(())
    }
}
