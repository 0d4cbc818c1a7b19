use alloc::vec::Vec;

use super::{AutodiffError, ParamStore};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.tensors().iter().map(|t| alloc::vec![0.0; t.len()]).collect();
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<(), AutodiffError> {
        self.step_masked(params, grads, None)
    }

    /// Like [`Adam::step`], but entries with `mask[tensor][i] == false` are
    /// left untouched (value and moments).
    pub fn step_masked(
        &mut self,
        params: &mut ParamStore,
        grads: &ParamStore,
        mask: Option<&[Vec<bool>]>,
    ) -> Result<(), AutodiffError> {
        if !params.same_layout(grads) || params.len() != self.m.len() {
            return Err(AutodiffError::StoreMismatch);
        }
        if let Some(mask) = mask {
            let ok = mask.len() == params.len()
                && mask.iter().zip(params.tensors()).all(|(m, t)| m.len() == t.len());
            if !ok {
                return Err(AutodiffError::StoreMismatch);
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - math::powi(beta1, self.step);
        let c2 = 1.0 - math::powi(beta2, self.step);
        for t in 0..params.len() {
            let g = grads.get(t).data();
            let p = params.get_mut(t).data_mut();
            let (m, v) = (&mut self.m[t], &mut self.v[t]);
            for i in 0..p.len() {
                if let Some(mask) = mask {
                    if !mask[t][i] {
                        continue;
                    }
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
