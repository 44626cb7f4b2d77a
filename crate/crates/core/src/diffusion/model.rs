use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::network::ScoreNetwork;
use crate::numerics::Tensor;

/// Anything that predicts the injected noise ε for a batch of `x_t`.
pub trait EpsModel: Sync {
    fn predict_eps(&self, x: &Tensor, steps: &[usize], schedule: &NoiseSchedule) -> Result<Tensor>;
}

impl EpsModel for ScoreNetwork {
    fn predict_eps(&self, x: &Tensor, steps: &[usize], schedule: &NoiseSchedule) -> Result<Tensor> {
        self.forward(x, steps, schedule.horizon())
    }
}

/// Exact `∇ log p_t(x)` when the data are `N(μ, σ²)` and the forward kernel
/// is `N(√ᾱ_t x₀, (1−ᾱ_t))`.
pub fn analytic_gaussian_score(mean: f64, var: f64, schedule: &NoiseSchedule, t: usize, x: f64) -> f64 {
    let ab = schedule.alpha_bar(t);
    -(x - ab.sqrt() * mean) / (ab * var + 1.0 - ab)
}

/// Converts an ε prediction to a score: `s = −ε̂ / √(1−ᾱ_t)`.
pub fn eps_to_score(eps: f64, schedule: &NoiseSchedule, t: usize) -> f64 {
    -eps / (1.0 - schedule.alpha_bar(t)).sqrt()
}

/// Independent Gaussian coordinates served through the analytic score.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

impl GaussianOracle {
    pub fn new(means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        if means.len() != vars.len() || vars.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig("oracle needs one positive variance per mean".into()));
        }
        Ok(Self { means, vars })
    }

    pub fn score(&self, schedule: &NoiseSchedule, t: usize, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.vars))
            .map(|(&xi, (&m, &v))| analytic_gaussian_score(m, v, schedule, t, xi))
            .collect()
    }
}

impl EpsModel for GaussianOracle {
    fn predict_eps(&self, x: &Tensor, steps: &[usize], schedule: &NoiseSchedule) -> Result<Tensor> {
        if x.cols() != self.means.len() || x.rows() != steps.len() {
            return Err(Error::shape("oracle input", x.shape(), &[steps.len(), self.means.len()]));
        }
        let mut out = x.clone();
        for (i, &t) in steps.iter().enumerate() {
            schedule.check_step(t)?;
            let sigma = (1.0 - schedule.alpha_bar(t)).sqrt();
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                let s = analytic_gaussian_score(self.means[j], self.vars[j], schedule, t, *v as f64);
                *v = (-sigma * s) as f32;
            }
        }
        Ok(out)
    }
}
