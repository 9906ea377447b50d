use serde::{Deserialize, Serialize};

use super::{check_len, NnError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: ParamSet>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        AdamState { config, steps: 0, first: zeros.clone(), second: zeros }
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<(), NnError> {
        let grads = grads.tensors();
        let params = params.tensors_mut();
        check_len(self.first.len(), params.len())?;
        check_len(self.first.len(), grads.len())?;
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for (i, (param, grad)) in params.into_iter().zip(grads).enumerate() {
            check_len(self.first[i].len(), param.len())?;
            check_len(param.len(), grad.data.len())?;
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..param.len() {
                let g = grad.data[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                param[j] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
