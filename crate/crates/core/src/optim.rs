//! Bias-corrected moment-based adaptive gradient updates.

use serde::{Deserialize, Serialize};

use crate::{Result, SpinrError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub epochs: usize,
    /// Measurements per optimizer step.
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl OptimizerConfig {
    /// Defaults for a field type: 1e-2 for voxel grids, 1e-3 for networks.
    pub fn for_field(kind: &str, epochs: usize, batch_size: usize, seed: u64) -> Self {
        OptimizerConfig {
            learning_rate: if kind == "grid" { 1e-2 } else { 1e-3 },
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            epochs,
            batch_size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(SpinrError::InvalidConfig(format!(
                "optimizer requires lr > 0, 0 < beta1, beta2 < 1, epsilon > 0, batch_size >= 1; got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: &OptimizerConfig, num_params: usize) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
