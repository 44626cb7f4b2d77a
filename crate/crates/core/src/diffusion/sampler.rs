//! Ancestral sampling from an ε-prediction model.
//!
//! ```text
//! x_T ~ N(0, I)
//! x_{t−1} = (x_t − (1−α_t)/√(1−ᾱ_t) · ε̂(x_t, t)) / √α_t + √β_t · z,   z = 0 at t = 1
//! ```
//!
//! Rows are processed in chunks of [`CHUNK_ROWS`]; chunk `c` draws from
//! `rng.split(c)`, so output is independent of thread count.

use rayon::prelude::*;

use crate::diffusion::checkpoint::Checkpoint;
use crate::diffusion::model::EpsModel;
use crate::diffusion::schedule::{forward_perturb, NoiseSchedule};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use crate::tabular::{decode, encode, Cell, Table};

pub const CHUNK_ROWS: usize = 512;

/// Known coordinates clamped during reverse diffusion.
#[derive(Clone, Copy)]
struct Known<'a> {
    x0: &'a Tensor,
    mask: &'a Tensor,
}

fn blend(mask: &Tensor, known: &Tensor, free: &mut Tensor) {
    for ((f, &k), &m) in free.data_mut().iter_mut().zip(known.data()).zip(mask.data()) {
        if m != 0.0 {
            *f = k;
        }
    }
}

fn reverse_chunk<M: EpsModel>(
    model: &M,
    schedule: &NoiseSchedule,
    rows: usize,
    dim: usize,
    mut rng: Rng,
    known: Option<Known<'_>>,
) -> Result<Tensor> {
    let mut observed_noise = rng.split_named("observed-perturbation");
    let mut x = rng.normal_tensor(&[rows, dim]);
    for t in (1..=schedule.horizon()).rev() {
        let steps = vec![t; rows];
        if let Some(k) = known {
            let eps = observed_noise.normal_tensor(&[rows, dim]);
            let xt_known = forward_perturb(k.x0, &steps, &eps, schedule)?;
            blend(k.mask, &xt_known, &mut x);
        }
        let eps_hat = model.predict_eps(&x, &steps, schedule)?;
        if eps_hat.shape() != x.shape() {
            return Err(Error::shape("eps prediction", eps_hat.shape(), x.shape()));
        }
        let (alpha, ab, beta) = (schedule.alpha(t), schedule.alpha_bar(t), schedule.beta(t));
        let coef = ((1.0 - alpha) / (1.0 - ab).sqrt()) as f32;
        let inv_sqrt_alpha = (1.0 / alpha.sqrt()) as f32;
        for (v, &e) in x.data_mut().iter_mut().zip(eps_hat.data()) {
            *v = (*v - coef * e) * inv_sqrt_alpha;
        }
        if t > 1 {
            let sd = beta.sqrt() as f32;
            let z = rng.normal_tensor(&[rows, dim]);
            for (v, &zi) in x.data_mut().iter_mut().zip(z.data()) {
                *v += sd * zi;
            }
        }
    }
    if let Some(k) = known {
        blend(k.mask, k.x0, &mut x);
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("reverse diffusion produced non-finite values".into()));
    }
    Ok(x)
}

fn run_chunks<M: EpsModel>(
    model: &M,
    schedule: &NoiseSchedule,
    n: usize,
    dim: usize,
    rng: &Rng,
    known: Option<Known<'_>>,
) -> Result<Tensor> {
    let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
    let chunks = starts
        .par_iter()
        .enumerate()
        .map(|(c, &start)| {
            let rows = CHUNK_ROWS.min(n - start);
            let slice = |t: &Tensor| Tensor::new(vec![rows, dim], t.data()[start * dim..(start + rows) * dim].to_vec());
            match known {
                Some(k) => {
                    let x0 = slice(k.x0)?;
                    let mask = slice(k.mask)?;
                    let k = Known { x0: &x0, mask: &mask };
                    reverse_chunk(model, schedule, rows, dim, rng.split(c as u64), Some(k))
                }
                None => reverse_chunk(model, schedule, rows, dim, rng.split(c as u64), None),
            }
        })
        .collect::<Result<Vec<Tensor>>>()?;
    let mut data = Vec::with_capacity(n * dim);
    for chunk in chunks {
        data.extend(chunk.into_data());
    }
    Tensor::new(vec![n, dim], data)
}

/// Draws `n` rows of width `dim` from the model.
pub fn sample_encoded<M: EpsModel>(model: &M, schedule: &NoiseSchedule, n: usize, dim: usize, rng: &Rng) -> Result<Tensor> {
    run_chunks(model, schedule, n, dim, rng, None)
}

/// Completes `x0` where `mask` is zero.
///
/// Before each reverse step the observed coordinates of `x_t` are replaced
/// by a fresh forward-kernel draw from `x0`; on return they equal `x0`.
pub fn impute_encoded<M: EpsModel>(
    model: &M,
    schedule: &NoiseSchedule,
    x0: &Tensor,
    mask: &Tensor,
    rng: &Rng,
) -> Result<Tensor> {
    if x0.shape() != mask.shape() || x0.shape().len() != 2 {
        return Err(Error::shape("impute", x0.shape(), mask.shape()));
    }
    run_chunks(model, schedule, x0.rows(), x0.cols(), rng, Some(Known { x0, mask }))
}

/// Samples `n` complete rows in the checkpoint's schema.
pub fn sample(ckpt: &Checkpoint, n: usize, rng: &Rng) -> Result<Table> {
    let dim = ckpt.schema.encoded_width();
    let x = sample_encoded(&ckpt.network, &ckpt.schedule, n, dim, rng)?;
    decode(&x, &ckpt.schema)
}

/// Produces `k` completions of `table`. Completion `i` uses `rng.split(i)`.
/// Observed cells are copied through unchanged.
pub fn impute(ckpt: &Checkpoint, table: &Table, k: usize, rng: &Rng) -> Result<Vec<Table>> {
    if !table.schema().same_layout(&ckpt.schema) {
        return Err(Error::Schema("table does not match the checkpoint schema".into()));
    }
    let (encoded, mask) = encode(table, &ckpt.schema)?;
    (0..k)
        .map(|i| {
            let x = impute_encoded(&ckpt.network, &ckpt.schedule, &encoded.matrix, &mask, &rng.split(i as u64))?;
            let decoded = decode(&x, &ckpt.schema)?;
            let rows = decoded
                .into_rows()
                .into_iter()
                .zip(table.rows())
                .map(|(filled, original)| {
                    filled
                        .into_iter()
                        .zip(original)
                        .map(|(f, o)| if o.is_na() { f } else { o.clone() })
                        .collect::<Vec<Cell>>()
                })
                .collect();
            Table::new(ckpt.schema.clone(), rows)
        })
        .collect()
}
