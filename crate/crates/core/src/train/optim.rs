use crate::tensor::DenseTensor;

use super::params::{Gradients, ParameterSet};
use super::{Result, TrainError};

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<DenseTensor>,
    pub second_moment: Vec<DenseTensor>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
            return Err(TrainError::InvalidSetting(format!(
                "adam lr={learning_rate} beta1={beta1} beta2={beta2} eps={epsilon}"
            )));
        }
        let zeros = Gradients::zeros_like(params).0;
        Ok(OptimizerState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        })
    }

    /// lr 1e-2, betas 0.9 / 0.999, epsilon 1e-8.
    pub fn with_defaults(params: &ParameterSet) -> Result<Self> {
        Self::new(params, 1e-2, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update. Inputs are left untouched; a non-finite
/// gradient rejects the whole step.
pub fn optimizer_step(
    state: &OptimizerState,
    params: &ParameterSet,
    grads: &Gradients,
) -> Result<(ParameterSet, OptimizerState)> {
    if grads.0.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} gradients and {} moments for {} parameters",
            grads.0.len(),
            state.first_moment.len(),
            params.len()
        )));
    }
    for (slot, g) in grads.0.iter().enumerate() {
        if g.dims() != params.get(slot).dims() {
            return Err(TrainError::ShapeMismatch(format!(
                "gradient {} for parameter `{}` {}",
                g.shape(),
                params.name(slot),
                params.get(slot).shape()
            )));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(params.name(slot).to_string()));
        }
    }
    let mut next = state.clone();
    let mut out = params.clone();
    next.step += 1;
    let t = next.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (slot, g) in grads.0.iter().enumerate() {
        let m = next.first_moment[slot].data_mut();
        let v = next.second_moment[slot].data_mut();
        let p = out.value_mut(slot).data_mut();
        for i in 0..g.numel() {
            let gi = g.data()[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok((out, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.add("p", DenseTensor::vector(vec![v]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let p = scalar_param(0.3);
        let s = OptimizerState::with_defaults(&p).unwrap();
        let (p2, s2) = optimizer_step(&s, &p, &Gradients::zeros_like(&p)).unwrap();
        assert_eq!(p2, p);
        assert_eq!(s2.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let p = scalar_param(0.0);
        let s = OptimizerState::new(&p, 0.1, 0.9, 0.999, 1e-8).unwrap();
        let g = Gradients(vec![DenseTensor::vector(vec![1.0]).unwrap()]);
        let (p2, _) = optimizer_step(&s, &p, &g).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        let moved = p2.get(0).data()[0];
        assert!((moved + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        let p = scalar_param(0.0);
        let s = OptimizerState::with_defaults(&p).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.0[0].data_mut()[0] = f64::NAN;
        assert!(matches!(optimizer_step(&s, &p, &g), Err(TrainError::NonFiniteGradient(_))));
    }

    #[test]
    fn deterministic() {
        let p = scalar_param(1.0);
        let s = OptimizerState::with_defaults(&p).unwrap();
        let g = Gradients(vec![DenseTensor::vector(vec![0.25]).unwrap()]);
        let a = optimizer_step(&s, &p, &g).unwrap();
        let b = optimizer_step(&s, &p, &g).unwrap();
        assert_eq!(a, b);
    }
}
