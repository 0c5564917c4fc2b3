use serde::{Deserialize, Serialize};

use super::array::DenseArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            lr_decay: 1e-6,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be >= 0", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} must lie in [0, 1)",
                self.momentum
            )));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Config(format!("lr_decay {} must be >= 0", self.lr_decay)));
        }
        Ok(())
    }
}

/// SGD with Nesterov momentum and inverse-time learning-rate decay.
///
/// The stored parameters track the lookahead point `θ + μv`, so the gradient
/// passed to [`OptimizerState::step`] evaluated at the stored parameters is
/// the Nesterov lookahead gradient. One step is
///
/// ```text
/// lr = base_lr / (1 + lr_decay * step_count)
/// v  = μ v − lr g
/// θ  = θ + μ v − lr g
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<DenseArray>,
    pub step_count: u64,
    pub config: SgdConfig,
}

impl OptimizerState {
    pub fn new<'p>(params: impl IntoIterator<Item = &'p DenseArray>, config: SgdConfig) -> Self {
        Self {
            velocity: params
                .into_iter()
                .map(|p| DenseArray::zeros(p.shape()))
                .collect(),
            step_count: 0,
            config,
        }
    }

    pub fn effective_lr(&self) -> f64 {
        self.config.base_lr / (1.0 + self.config.lr_decay * self.step_count as f64)
    }

    pub fn step(&mut self, params: &mut [&mut DenseArray], grads: &[DenseArray]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} arrays, got {} params and {} grads",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), v) in params.iter().zip(grads).zip(&self.velocity) {
            if !p.same_shape(g) || !p.same_shape(v) {
                return Err(Error::Dimension(format!(
                    "optimizer: param {:?}, grad {:?}, velocity {:?}",
                    p.shape(),
                    g.shape(),
                    v.shape()
                )));
            }
        }
        let lr = self.effective_lr();
        let mu = self.config.momentum;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = mu * *vi - lr * gi;
                *pi += mu * *vi - lr * gi;
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

/// Free-function form of one optimizer step.
pub fn nesterov_step(
    params: &mut [&mut DenseArray],
    grads: &[DenseArray],
    state: &mut OptimizerState,
) -> Result<()> {
    state.step(params, grads)
}
