use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::ParamSet;
use crate::error::{config_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: ParamSet,
    v: ParamSet,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: &ParamSet, config: AdamConfig) -> Self {
        Self { config, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParamSet {
        &self.m
    }

    pub fn second_moment(&self) -> &ParamSet {
        &self.v
    }

    /// One update `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(config_err("learning rate must be positive"));
        }
        if !params.same_layout(grads) || !params.same_layout(&self.m) {
            return Err(shape_err("gradients do not match the parameter layout"));
        }
        if !grads.is_finite() {
            return Err(crate::Error::NonFinite("gradients"));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for i in 0..params.len() {
            let g = grads.tensor(i).data();
            let m = self.m.tensor_mut(i).data_mut();
            for (mj, gj) in m.iter_mut().zip(g) {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
            }
            let v = self.v.tensor_mut(i).data_mut();
            for (vj, gj) in v.iter_mut().zip(g) {
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
            }
            let (m, v) = (self.m.tensor(i).data(), self.v.tensor(i).data());
            for ((p, mj), vj) in params.tensor_mut(i).data_mut().iter_mut().zip(m).zip(v) {
                *p -= lr * (mj / c1) / ((vj / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use alloc::string::ToString;
    use alloc::vec;

    fn params(v: f64) -> ParamSet {
        ParamSet::new(vec![("w".to_string(), Tensor::new(vec![2], vec![v, -v]).unwrap())]).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = params(1.5);
        let mut s = AdamState::new(&p);
        s.step(&mut p, &params(0.0), 1e-3).unwrap();
        assert_eq!(p, params(1.5));
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = params(0.0);
        let mut s = AdamState::new(&p);
        s.step(&mut p, &params(0.3), 1e-2).unwrap();
        let d = p.tensor(0).data();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!((d[0] + 1e-2 * 0.3 / (0.3 + 1e-8)).abs() < 1e-15);
        assert!((d[1] - 1e-2 * 0.3 / (0.3 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = params(0.0);
        let mut s = AdamState::new(&p);
        let g = params(4.0);
        let mut prev = p.tensor(0).data()[0];
        for _ in 0..1000 {
            s.step(&mut p, &g, 1e-3).unwrap();
            let now = p.tensor(0).data()[0];
            let delta = prev - now;
            prev = now;
            assert!((delta / 1e-3 - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = params(0.0);
        let mut s = AdamState::new(&p);
        assert!(s.step(&mut p, &params(1.0), 0.0).is_err());
        assert!(s.step(&mut p, &params(f64::NAN), 1e-3).is_err());
        let other = ParamSet::new(vec![("u".to_string(), Tensor::zeros(&[2]))]).unwrap();
        assert!(s.step(&mut p, &other, 1e-3).is_err());
    }
}
