//! Adam with a multi-step learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f32) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "adam_step",
                &[params.len(), grads.len()],
                &[self.first.len()],
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Piecewise-constant decay by `factor` at ⌈0.25E⌉, ⌈0.5E⌉, ⌈0.75E⌉ and ⌈0.9E⌉.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
    pub factor: f64,
    pub milestones: Vec<usize>,
}

pub const DEFAULT_LR: f64 = 5e-4;
const MILESTONE_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 0.9];

impl LrSchedule {
    pub fn multi_step(base_lr: f64, total_epochs: usize) -> Self {
        let milestones = MILESTONE_FRACTIONS
            .iter()
            .map(|f| (f * total_epochs as f64).ceil() as usize)
            .collect();
        Self {
            base_lr,
            total_epochs,
            factor: 0.1,
            milestones,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::OutOfRange {
                what: "epoch",
                value: epoch.to_string(),
                range: format!("[0, {})", self.total_epochs),
            });
        }
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        Ok(self.base_lr * self.factor.powi(passed as i32))
    }
}
