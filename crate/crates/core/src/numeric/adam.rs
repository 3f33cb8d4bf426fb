use serde::{Deserialize, Serialize};

use super::params::Parameterized;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 7e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators laid out block-for-block like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameterized>(config: AdamConfig, params: &P) -> Self {
        let first: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.data.len()]).collect();
        Self {
            config,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Gradients are validated before anything is written.
    pub fn step<P: Parameterized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.first.len() {
            return Err(Error::Shape {
                context: "adam block count".into(),
                expected: self.first.len(),
                actual: grad_blocks.len(),
            });
        }
        for (g, m) in grad_blocks.iter().zip(&self.first) {
            if g.data.len() != m.len() {
                return Err(Error::Shape {
                    context: format!("adam block `{}`", g.name),
                    expected: m.len(),
                    actual: g.data.len(),
                });
            }
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(g.name.clone()));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .blocks_mut()
            .into_iter()
            .zip(&grad_blocks)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                p.data[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
