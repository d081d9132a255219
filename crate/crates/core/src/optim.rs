//! Adam with per-parameter learning-rate multipliers and inverse-square-root warmup.

use crate::error::{contract, Result};
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    /// Peak learning rate (reached at the end of warmup).
    pub lr_peak: f64,
    /// 0 disables warmup: the learning rate is `lr_peak` throughout.
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr_peak: 0.005,
            warmup_steps: 30_000,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-9,
        }
    }
}

impl AdamConfig {
    /// `peak · min(s / warmup, sqrt(warmup / s))` for step `s ≥ 1`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let s = step.max(1) as f64;
        if self.warmup_steps == 0 {
            return self.lr_peak;
        }
        let w = self.warmup_steps as f64;
        self.lr_peak * (s / w).min((w / s).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState<S> {
    pub config: AdamConfig,
    pub step: usize,
    moments: Vec<(Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// One bias-corrected Adam update. Each parameter's step size is
    /// `lr(step) · lr_mult`; frozen parameters keep their moments and values.
    ///
    /// `params` must be passed in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Parameter<S>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(contract(format!(
                "optimizer tracks {} parameters, got {}",
                self.moments.len(),
                params.len()
            )));
        }
        for (p, (m, _)) in params.iter().zip(&self.moments) {
            if p.shape() != m.shape() || p.grad.shape() != p.shape() {
                return Err(contract(format!("parameter {} changed shape", p.name)));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let lit = S::from_f64_lossy;
        let (b1, b2, eps) = (lit(c.beta1), lit(c.beta2), lit(c.epsilon));
        let correct1 = S::one() - b1.powi(t);
        let correct2 = S::one() - b2.powi(t);
        let lr = lit(c.learning_rate(self.step));

        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            if p.frozen {
                continue;
            }
            let step_size = lr * p.lr_mult;
            let grads = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grads[i];
                md[i] = b1 * md[i] + (S::one() - b1) * g;
                vd[i] = b2 * vd[i] + (S::one() - b2) * g * g;
                let m_hat = md[i] / correct1;
                let v_hat = vd[i] / correct2;
                *w -= step_size * (m_hat / (v_hat.sqrt() + eps));
            }
        }
        Ok(())
    }
}
