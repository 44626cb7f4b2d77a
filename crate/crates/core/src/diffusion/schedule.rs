use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Discrete variance-preserving schedule, indexed by step `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// `β_t = ((T−t)/(T−1)·√β₁ + (t−1)/(T−1)·√β_T)²` with both endpoints exact.
pub fn build_vp_schedule(timesteps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if timesteps < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 diffusion steps, got {timesteps}")));
    }
    if !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "noise levels must satisfy 0 < beta_min < beta_max < 1, got {beta_min} and {beta_max}"
        )));
    }
    let (lo, hi) = (beta_min.sqrt(), beta_max.sqrt());
    let span = (timesteps - 1) as f64;
    let betas: Vec<f64> = (1..=timesteps)
        .map(|t| {
            if t == 1 {
                beta_min
            } else if t == timesteps {
                beta_max
            } else {
                let w = (t - 1) as f64 / span;
                ((1.0 - w) * lo + w * hi).powi(2)
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        betas,
        alphas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    pub fn horizon(&self) -> usize {
        self.betas.len()
    }

    fn index(&self, t: usize) -> usize {
        assert!(t >= 1 && t <= self.betas.len(), "diffusion step {t} outside [1, {}]", self.betas.len());
        t - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[self.index(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[self.index(t)]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[self.index(t)]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t >= 1 && t <= self.horizon() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "diffusion step",
                value: t.to_string(),
                range: format!("[1, {}]", self.horizon()),
            })
        }
    }
}

/// `√ᾱ·x₀ + √(1−ᾱ)·ε` for a single value.
pub fn perturb_value(x0: f32, eps: f32, alpha_bar: f64) -> f32 {
    (alpha_bar.sqrt() as f32) * x0 + ((1.0 - alpha_bar).sqrt() as f32) * eps
}

/// Forward kernel sample `x_t` for a batch with one step per row.
pub fn forward_perturb(x0: &Tensor, steps: &[usize], eps: &Tensor, schedule: &NoiseSchedule) -> Result<Tensor> {
    if x0.shape() != eps.shape() {
        return Err(Error::shape("forward_perturb", x0.shape(), eps.shape()));
    }
    if x0.shape().len() != 2 || x0.rows() != steps.len() {
        return Err(Error::shape("forward_perturb steps", x0.shape(), &[steps.len()]));
    }
    let mut out = x0.clone();
    for (i, &t) in steps.iter().enumerate() {
        schedule.check_step(t)?;
        let ab = schedule.alpha_bar(t);
        for (o, &e) in out.row_mut(i).iter_mut().zip(eps.row(i)) {
            *o = perturb_value(*o, e, ab);
        }
    }
    Ok(out)
}
