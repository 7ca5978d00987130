//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{GradBundle, MlpParams};
use crate::error::{Error, Result};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Per-network optimizer state: first/second moment estimates mirroring the
/// parameter arrays, plus the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step_count: u64,
    m_weights: Vec<Matrix>,
    v_weights: Vec<Matrix>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        let zeros_w = || -> Vec<Matrix> {
            params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect()
        };
        let zeros_b =
            || -> Vec<Vec<f64>> { params.biases.iter().map(|b| vec![0.0; b.len()]).collect() };
        Self {
            config,
            step_count: 0,
            m_weights: zeros_w(),
            v_weights: zeros_w(),
            m_biases: zeros_b(),
            v_biases: zeros_b(),
        }
    }

    /// One bias-corrected update. Weight decay is decoupled: applied directly
    /// to the parameters, scaled by the current learning rate, not mixed into
    /// the gradient moments.
    pub fn step(&mut self, params: &mut MlpParams, grads: &GradBundle) -> Result<()> {
        if let Some(locus) = grads.first_non_finite() {
            return Err(Error::NonFinite {
                locus: format!("gradient {locus}"),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for k in 0..params.weights.len() {
            let g = grads.d_weights[k].data();
            let m = self.m_weights[k].data_mut();
            let v = self.v_weights[k].data_mut();
            let w = params.weights[k].data_mut();
            for i in 0..w.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                w[i] -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon));
                w[i] -= c.learning_rate * c.weight_decay * w[i];
            }
        }
        for k in 0..params.biases.len() {
            let g = &grads.d_biases[k];
            let m = &mut self.m_biases[k];
            let v = &mut self.v_biases[k];
            let b = &mut params.biases[k];
            for i in 0..b.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                b[i] -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon));
                b[i] -= c.learning_rate * c.weight_decay * b[i];
            }
        }
        Ok(())
    }
}
