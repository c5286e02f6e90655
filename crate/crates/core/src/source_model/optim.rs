use serde::{Deserialize, Serialize};

use super::loss::GradientSet;
use super::params::{AdaptableMask, ModelParams};
use crate::error::{RadarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer over the masked tensors. Unmasked tensors are
/// never written.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.steps = 0;
        self.moments.clear();
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(
        &mut self,
        params: &mut ModelParams,
        mask: &AdaptableMask,
        grads: &GradientSet,
    ) -> Result<()> {
        if mask.flags.len() != params.num_tensors() || mask.count() != grads.len() {
            return Err(RadarError::invalid(
                "gradient set does not match the adaptable mask",
            ));
        }
        if self.moments.is_empty() {
            self.moments = grads
                .entries
                .iter()
                .map(|(_, t)| (vec![0.0; t.len()], vec![0.0; t.len()]))
                .collect();
        }
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        let mut flags = mask.flags.iter();
        let mut entries = grads.entries.iter().zip(self.moments.iter_mut());
        let mut mismatch = None;
        params.for_each_mut(|name, tensor| {
            if !*flags.next().expect("mask length checked") {
                return;
            }
            let ((gname, grad), (m, v)) = entries.next().expect("gradient count checked");
            if *gname != name || grad.len() != tensor.len() {
                mismatch.get_or_insert(name);
                return;
            }
            for k in 0..tensor.data.len() {
                let g = grad.data[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                tensor.data[k] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        });
        match mismatch {
            Some(name) => Err(RadarError::invalid(format!(
                "gradient entry for {name} does not match"
            ))),
            None => Ok(()),
        }
    }
}
