use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{DialError, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One AdamW update with decoupled weight decay. `step` counts from 1.
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    state: &mut Moments,
    step: u64,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if param.len() != grad.len() || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(DialError::SizeMismatch(param.len(), grad.len()));
    }
    if step == 0 {
        return Err(DialError::InvalidArgument("adam step counts from 1".into()));
    }
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    let decay = 1.0 - lr * weight_decay;
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        param[i] = param[i] * decay - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Moments for a fixed list of parameter tensors plus the shared step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            step: 0,
            moments: sizes.iter().map(|&n| Moments::zeros(n)).collect(),
        }
    }

    /// Advances the step count and updates every tensor.
    pub fn apply(&mut self, params: Vec<&mut [f64]>, grads: &[Tensor], lr: f64, weight_decay: f64) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != params.len() {
            return Err(DialError::SizeMismatch(self.moments.len(), params.len()));
        }
        self.step += 1;
        for ((p, g), st) in params.into_iter().zip(grads).zip(&mut self.moments) {
            adamw_update(p, g.data(), st, self.step, lr, weight_decay)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut p = vec![1.5, -2.0];
        let mut s = Moments::zeros(2);
        adamw_update(&mut p, &[0.0, 0.0], &mut s, 1, 0.1, 0.0).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn zero_grad_decays() {
        let mut p = vec![2.0];
        let mut s = Moments::zeros(1);
        adamw_update(&mut p, &[0.0], &mut s, 1, 0.1, 0.5).unwrap();
        assert_eq!(p, vec![2.0 * (1.0 - 0.05)]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0];
        let mut s = Moments::zeros(1);
        adamw_update(&mut p, &[1.0], &mut s, 1, 1e-3, 0.0).unwrap();
        // m_hat = v_hat = 1
        assert!((p[0] - (1.0 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn shape_checks() {
        let mut p = vec![1.0];
        let mut s = Moments::zeros(2);
        assert!(adamw_update(&mut p, &[1.0], &mut s, 1, 1e-3, 0.0).is_err());
        let mut s = Moments::zeros(1);
        assert!(adamw_update(&mut p, &[1.0], &mut s, 0, 1e-3, 0.0).is_err());
    }
}
