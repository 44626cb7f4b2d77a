//! Independent f64 re-implementation of the score network and masked loss,
//! used as a finite-difference oracle for the f32 autodiff gradients.

#![allow(dead_code)]

use maskdiff::diffusion::{build_vp_schedule, loss_and_grads, LossBatch, NoiseSchedule};
use maskdiff::network::{NetworkConfig, ScoreNetwork};
use maskdiff::numerics::{Rng, Tensor};

/// Parameter shapes in canonical order.
fn shapes(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
    let (d, c, e) = (cfg.input_dim, cfg.channels, cfg.embed_dim);
    let mut out = vec![(d, c), (1, c)];
    for _ in 0..cfg.num_blocks {
        out.extend([(c, c), (1, c), (e, c), (1, c), (c, c), (1, c)]);
    }
    out.extend([(c, d), (1, d)]);
    out
}

fn affine(x: &[Vec<f64>], w: &[f64], b: &[f64], cols: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..cols)
                .map(|j| b[j] + row.iter().enumerate().map(|(i, v)| v * w[i * cols + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn embed(t: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for k in 0..dim / 2 {
        let arg = t as f64 / 10000f64.powf(2.0 * k as f64 / dim as f64);
        out[2 * k] = arg.sin();
        out[2 * k + 1] = arg.cos();
    }
    out
}

/// `(1/B) Σ ‖(ε − net(x_t, t)) ⊙ m‖²` evaluated entirely in f64.
pub fn reference_loss(
    cfg: &NetworkConfig,
    params: &[Vec<f64>],
    x0: &Tensor,
    steps: &[usize],
    eps: &Tensor,
    mask: &Tensor,
    schedule: &NoiseSchedule,
) -> f64 {
    let (d, c) = (cfg.input_dim, cfg.channels);
    let xt: Vec<Vec<f64>> = (0..x0.rows())
        .map(|i| {
            let ab = schedule.alpha_bar(steps[i]);
            (0..d)
                .map(|j| ab.sqrt() * x0.row(i)[j] as f64 + (1.0 - ab).sqrt() * eps.row(i)[j] as f64)
                .collect()
        })
        .collect();
    let emb: Vec<Vec<f64>> = steps.iter().map(|&t| embed(t, cfg.embed_dim)).collect();
    let mut h = affine(&xt, &params[0], &params[1], c);
    for b in 0..cfg.num_blocks {
        let p = &params[2 + 6 * b..8 + 6 * b];
        let u = affine(&h, &p[0], &p[1], c);
        let v = affine(&emb, &p[2], &p[3], c);
        let act: Vec<Vec<f64>> = u
            .iter()
            .zip(&v)
            .map(|(ur, vr)| {
                ur.iter()
                    .zip(vr)
                    .map(|(a, b)| {
                        let z = a + b;
                        z / (1.0 + (-z).exp())
                    })
                    .collect()
            })
            .collect();
        let delta = affine(&act, &p[4], &p[5], c);
        for (hr, dr) in h.iter_mut().zip(&delta) {
            for (a, b) in hr.iter_mut().zip(dr) {
                *a += b;
            }
        }
    }
    let k = params.len();
    let out = affine(&h, &params[k - 2], &params[k - 1], d);
    let mut total = 0.0;
    for i in 0..x0.rows() {
        for j in 0..d {
            let r = eps.row(i)[j] as f64 - out[i][j];
            total += mask.row(i)[j] as f64 * r * r;
        }
    }
    total / x0.rows() as f64
}

pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub f32_loss: f32,
    pub f64_loss: f64,
}

/// Compares autodiff gradients of the masked loss on the full default
/// network against central differences of [`reference_loss`].
pub fn gradient_check(seed: u64, input_dim: usize, batch: usize, n_params: usize) -> GradCheck {
    let mut rng = Rng::new(seed);
    let cfg = NetworkConfig::new(input_dim);
    let mut net = ScoreNetwork::new(cfg, &mut rng.split(1)).unwrap();
    // Non-zero biases so their gradients are exercised off the init point.
    for t in net.params.tensors_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v = (0.1 * rng.normal()) as f32;
            }
        }
    }
    let schedule = build_vp_schedule(100, 1e-4, 0.5).unwrap();
    let x0 = rng.normal_tensor(&[batch, input_dim]);
    let eps = rng.normal_tensor(&[batch, input_dim]);
    let steps: Vec<usize> = (0..batch).map(|_| rng.int_inclusive(1, 100)).collect();
    let mask_data: Vec<f32> = (0..batch * input_dim).map(|_| rng.bernoulli(0.7) as u8 as f32).collect();
    let mask = Tensor::new(vec![batch, input_dim], mask_data).unwrap();

    let b = LossBatch { x0: &x0, steps: &steps, eps: &eps };
    let (f32_loss, grads) = loss_and_grads(&net, b, Some(&mask), &schedule).unwrap();

    let mut params: Vec<Vec<f64>> = net
        .params
        .tensors()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    assert_eq!(
        shapes(&cfg).iter().map(|(r, c)| r * c).collect::<Vec<_>>(),
        params.iter().map(|p| p.len()).collect::<Vec<_>>()
    );
    let f64_loss = reference_loss(&cfg, &params, &x0, &steps, &eps, &mask, &schedule);

    let h = 1e-5;
    let mut max_rel_error = 0.0f64;
    for _ in 0..n_params {
        let which = rng.int_inclusive(0, params.len() - 1);
        let idx = rng.int_inclusive(0, params[which].len() - 1);
        let orig = params[which][idx];
        params[which][idx] = orig + h;
        let up = reference_loss(&cfg, &params, &x0, &steps, &eps, &mask, &schedule);
        params[which][idx] = orig - h;
        let down = reference_loss(&cfg, &params, &x0, &steps, &eps, &mask, &schedule);
        params[which][idx] = orig;
        let fd = (up - down) / (2.0 * h);
        let analytic = grads[which].data()[idx] as f64;
        let scale = fd.abs().max(analytic.abs());
        let rel = if scale == 0.0 { 0.0 } else { (fd - analytic).abs() / scale };
        max_rel_error = max_rel_error.max(rel);
    }
    GradCheck {
        checked: n_params,
        max_rel_error,
        f32_loss,
        f64_loss,
    }
}
