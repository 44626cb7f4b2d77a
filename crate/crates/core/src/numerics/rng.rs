//! Seeded random streams.
//!
//! [`Rng`] wraps ChaCha8 seeded from a 64-bit seed. Sub-streams are derived
//! with [`Rng::split`]: the child seed is `splitmix64(seed ^ splitmix64(label))`,
//! so a child depends only on its parent's seed and the label, never on how
//! much of the parent stream has been consumed.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `label`.
    pub fn split(&self, label: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(label)))
    }

    /// Child stream keyed by a string label (FNV-1a hashed).
    pub fn split_named(&self, label: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.split(h)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `[low, high]`.
    pub fn int_inclusive(&mut self, low: usize, high: usize) -> usize {
        self.inner.random_range(low..=high)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_with(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.normal()
    }

    /// Index drawn from an unnormalized probability vector.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let total: f64 = probs.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &p) in probs.iter().enumerate() {
            if u < p {
                return i;
            }
            u -= p;
        }
        probs.len() - 1
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in random order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }

    /// Tensor of i.i.d. standard normal draws, row-major.
    pub fn normal_tensor(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| StandardNormal.sample(&mut self.inner))
            .collect::<Vec<f32>>();
        Tensor::new(shape.to_vec(), data).expect("length matches shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let rng = Rng::new(7);
        let a = rng.clone().normal_tensor(&[4]);
        let b = rng.clone().normal_tensor(&[4]);
        assert_eq!(a, b);
        assert_eq!(Rng::new(7).normal_tensor(&[4]), a);
    }

    #[test]
    fn shape_is_row_major_count() {
        let t = Rng::new(1).normal_tensor(&[2, 3]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.len(), 6);
    }

    #[test]
    fn normal_moments() {
        let t = Rng::new(3).normal_tensor(&[1_000_000]);
        let n = t.len() as f64;
        let mean = t.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = t.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn split_ignores_parent_consumption() {
        let mut parent = Rng::new(9);
        let before = parent.split(4).normal();
        parent.normal();
        assert_eq!(parent.split(4).normal(), before);
        assert_ne!(parent.split(5).normal(), before);
    }

    #[test]
    fn choose_distinct_has_no_repeats() {
        let mut idx = Rng::new(2).choose_distinct(10, 6);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 6);
        assert!(idx.iter().all(|&i| i < 10));
    }
}
