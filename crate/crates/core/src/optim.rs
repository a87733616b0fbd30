//! AdamW with decoupled weight decay.
//!
//! Per step, for every parameter entry `θ` with gradient `g`:
//!
//! ```text
//! θ ← θ · (1 − lr·wd)
//! m ← β1 m + (1 − β1) g
//! v ← β2 v + (1 − β2) g²
//! θ ← θ − lr · m̂ / (√v̂ + ε)      m̂ = m / (1 − β1^t),  v̂ = v / (1 − β2^t)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid AdamW hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step_count: u64,
    /// First moments, one per parameter tensor in `ModelParams::tensors` order.
    pub m: Vec<Matrix>,
    /// Second moments.
    pub v: Vec<Matrix>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|(_, t)| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            config,
            step_count: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update in place. Nothing is modified if the shapes disagree
    /// or any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        let gs = grads.tensors();
        {
            let ps = params.tensors();
            if ps.len() != gs.len() || ps.len() != self.m.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} parameter tensors, {} gradients, {} moment slots",
                    ps.len(),
                    gs.len(),
                    self.m.len()
                )));
            }
            for (k, ((name, p), (_, g))) in ps.iter().zip(&gs).enumerate() {
                if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                    return Err(Error::DimensionMismatch(format!(
                        "{name}: parameter {:?}, gradient {:?}, moments {:?}",
                        p.shape(),
                        g.shape(),
                        self.m[k].shape()
                    )));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {name}")));
                }
            }
        }

        let c = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.lr * c.weight_decay;
        for (k, p) in params.tensors_mut().into_iter().enumerate() {
            let g = gs[k].1.as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (idx, theta) in p.as_mut_slice().iter_mut().enumerate() {
                let gi = g[idx];
                m[idx] = c.beta1 * m[idx] + (1.0 - c.beta1) * gi;
                v[idx] = c.beta2 * v[idx] + (1.0 - c.beta2) * gi * gi;
                let m_hat = m[idx] / bc1;
                let v_hat = v[idx] / bc2;
                *theta = *theta * decay - c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Functional form: returns updated copies of `params` and `state`.
pub fn adamw_step(params: &ModelParams, grads: &ModelParams, state: &AdamWState) -> Result<(ModelParams, AdamWState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.step(&mut p, grads)?;
    Ok((p, s))
}
