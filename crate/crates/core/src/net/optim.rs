use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling applied before the moment update.
    pub max_grad_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: 0.5,
        }
    }
}

/// Adam with bias correction and global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: MlpParams,
    second: MlpParams,
    step: u64,
}

impl Adam {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Adam {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update in place. Returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<f64> {
        if !params.same_shape(grads) || !params.same_shape(&self.first) {
            return Err(Error::DimensionMismatch {
                context: "optimizer step",
                expected: params.param_count(),
                got: grads.param_count(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let norm = grads.tensors().flatten().map(|g| g * g).sum::<f64>().sqrt();
        let clip = if norm > self.config.max_grad_norm {
            self.config.max_grad_norm / norm
        } else {
            1.0
        };

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let tensors = params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().zip(self.second.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(norm)
    }
}
