use std::f64::consts::PI;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Param};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(format!(
                "adam betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!(
                "adam eps {} must be positive",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments, kept per parameter name.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    /// One update of every parameter that has a gradient. NaN or infinite
    /// gradients abort before anything is modified.
    pub fn step<F: Scalar>(
        &mut self,
        params: Vec<&mut Param<F>>,
        grads: &Gradients<F>,
        lr: f64,
    ) -> Result<()> {
        if let Some((name, _)) = grads
            .by_name
            .iter()
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Training(format!(
                "non-finite gradient for parameter '{name}' at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for p in params {
            let Some(g) = grads.get(&p.name) else {
                continue;
            };
            let (m, v) = self
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gi = gi.as_f64();
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w = F::of(w.as_f64() - lr * m_hat / (v_hat.sqrt() + eps));
            }
        }
        Ok(())
    }
}

/// `lr₀·(1 + cos(π·epoch/total))/2`, without restarts.
pub fn cosine_anneal(lr0: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return lr0;
    }
    let e = epoch.min(total_epochs) as f64;
    lr0 * (1.0 + (PI * e / total_epochs as f64).cos()) / 2.0
}
