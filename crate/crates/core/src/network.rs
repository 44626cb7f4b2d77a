//! Residual MLP that predicts the injected noise ε from `(x_t, t)`.
//!
//! ```text
//! h = x · W_in + b_in
//! for each block:
//!     h = h + Linear₂(SiLU(Linear₁(h) + TimeProj(embed(t))))
//! out = h · W_out + b_out
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub num_blocks: usize,
}

impl NetworkConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            channels: 64,
            embed_dim: 128,
            num_blocks: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.channels == 0 || self.embed_dim == 0 || self.num_blocks == 0 {
            return Err(Error::InvalidConfig(format!("network dimensions must be positive: {self:?}")));
        }
        if !self.embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("embed_dim must be even, got {}", self.embed_dim)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, c, e) = (self.input_dim, self.channels, self.embed_dim);
        let block = 2 * (c * c + c) + e * c + c;
        (d * c + c) + self.num_blocks * block + (c * d + d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn xavier(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = xavier_bound(fan_in, fan_out);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound) as f32)
            .collect();
        Self {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("sized"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub first: Linear,
    pub time_proj: Linear,
    pub second: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub input: Linear,
    pub blocks: Vec<ResidualBlock>,
    pub output: Linear,
}

impl NetworkParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init(config: &NetworkConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (d, c, e) = (config.input_dim, config.channels, config.embed_dim);
        let input = Linear::xavier(d, c, rng);
        let blocks = (0..config.num_blocks)
            .map(|_| ResidualBlock {
                first: Linear::xavier(c, c, rng),
                time_proj: Linear::xavier(e, c, rng),
                second: Linear::xavier(c, c, rng),
            })
            .collect();
        let output = Linear::xavier(c, d, rng);
        Ok(Self { input, blocks, output })
    }

    /// Parameters in canonical order with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("input.weight".to_string(), &self.input.weight),
            ("input.bias".to_string(), &self.input.bias),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (part, lin) in [("first", &b.first), ("time_proj", &b.time_proj), ("second", &b.second)] {
                out.push((format!("blocks.{i}.{part}.weight"), &lin.weight));
                out.push((format!("blocks.{i}.{part}.bias"), &lin.bias));
            }
        }
        out.push(("output.weight".to_string(), &self.output.weight));
        out.push(("output.bias".to_string(), &self.output.bias));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.input.weight, &mut self.input.bias];
        for b in &mut self.blocks {
            out.push(&mut b.first.weight);
            out.push(&mut b.first.bias);
            out.push(&mut b.time_proj.weight);
            out.push(&mut b.time_proj.bias);
            out.push(&mut b.second.weight);
            out.push(&mut b.second.bias);
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    /// Rebuilds parameters from tensors in [`NetworkParams::named`] order.
    pub fn from_tensors(config: &NetworkConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let mut template = Self::init(config, &mut Rng::new(0))?;
        let slots = template.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::shape("from_tensors", slot.shape(), t.shape()));
            }
            *slot = t;
        }
        Ok(template)
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Sinusoidal embedding of an integer diffusion step: even slots hold
/// `sin(t / 10000^(2k/dim))`, odd slots the matching cosine.
pub fn time_embed(t: usize, horizon: usize, embed_dim: usize) -> Result<Vec<f32>> {
    if t < 1 || t > horizon {
        return Err(Error::OutOfRange {
            what: "diffusion step",
            value: t.to_string(),
            range: format!("[1, {horizon}]"),
        });
    }
    Ok(sinusoid(t as f64, embed_dim))
}

pub(crate) fn sinusoid(t: f64, embed_dim: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; embed_dim];
    for k in 0..embed_dim / 2 {
        let freq = 10000f64.powf(2.0 * k as f64 / embed_dim as f64);
        let arg = t / freq;
        out[2 * k] = arg.sin() as f32;
        out[2 * k + 1] = arg.cos() as f32;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetwork {
    pub config: NetworkConfig,
    pub params: NetworkParams,
}

/// Handles to the parameter leaves of one forward pass, in canonical order.
pub struct ForwardNodes {
    pub output: NodeId,
    pub params: Vec<NodeId>,
}

impl ScoreNetwork {
    pub fn new(config: NetworkConfig, rng: &mut Rng) -> Result<Self> {
        let params = NetworkParams::init(&config, rng)?;
        Ok(Self { config, params })
    }

    fn embed_batch(&self, steps: &[usize], horizon: usize) -> Result<Tensor> {
        let e = self.config.embed_dim;
        let mut data = Vec::with_capacity(steps.len() * e);
        for &t in steps {
            data.extend(time_embed(t, horizon, e)?);
        }
        Tensor::new(vec![steps.len(), e], data)
    }

    /// Records the forward pass on `graph` with the parameters as trainable leaves.
    pub fn forward_graph(
        &self,
        graph: &mut Graph,
        x: NodeId,
        steps: &[usize],
        horizon: usize,
    ) -> Result<ForwardNodes> {
        let shape = graph.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.input_dim {
            return Err(Error::shape("score network input", &shape, &[steps.len(), self.config.input_dim]));
        }
        if shape[0] != steps.len() {
            return Err(Error::shape("score network steps", &shape, &[steps.len()]));
        }

        let emb = graph.constant(self.embed_batch(steps, horizon)?);
        let mut params = Vec::new();
        let mut leaf = |g: &mut Graph, lin: &Linear| {
            let w = g.param(lin.weight.clone());
            let b = g.param(lin.bias.clone());
            params.push(w);
            params.push(b);
            (w, b)
        };

        let (w, b) = leaf(graph, &self.params.input);
        let mut h = graph.linear(x, w, b)?;
        for block in &self.params.blocks {
            let (w1, b1) = leaf(graph, &block.first);
            let (wt, bt) = leaf(graph, &block.time_proj);
            let (w2, b2) = leaf(graph, &block.second);
            let u = graph.linear(h, w1, b1)?;
            let v = graph.linear(emb, wt, bt)?;
            let pre = graph.add(u, v)?;
            let act = graph.silu(pre)?;
            let delta = graph.linear(act, w2, b2)?;
            h = graph.add(h, delta)?;
        }
        let (w, b) = leaf(graph, &self.params.output);
        let output = graph.linear(h, w, b)?;
        Ok(ForwardNodes { output, params })
    }

    /// ε prediction for a batch `[B, input_dim]` with one step per row.
    pub fn forward(&self, x: &Tensor, steps: &[usize], horizon: usize) -> Result<Tensor> {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let nodes = self.forward_graph(&mut g, xn, steps, horizon)?;
        Ok(g.value(nodes.output).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = NetworkConfig::new(10);
        let a = NetworkParams::init(&cfg, &mut Rng::new(5)).unwrap();
        let b = NetworkParams::init(&cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        for (name, t) in a.named() {
            if name.ends_with("bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert_eq!(a.count(), cfg.param_count());
    }

    #[test]
    fn xavier_bound_for_square_layer() {
        let bound = xavier_bound(64, 64);
        assert!((bound - 0.216_506_35).abs() < 1e-6);
        let p = NetworkParams::init(&NetworkConfig::new(10), &mut Rng::new(1)).unwrap();
        let w = &p.blocks[0].first.weight;
        assert!(w.data().iter().all(|v| (v.abs() as f64) <= bound));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = NetworkConfig::new(3);
        cfg.embed_dim = 7;
        assert!(cfg.validate().is_err());
        assert!(NetworkConfig::new(0).validate().is_err());
    }

    #[test]
    fn embedding_values() {
        let e = time_embed(1, 100, 128).unwrap();
        assert_eq!(e.len(), 128);
        assert!((e[0] - 0.841_470_96).abs() < 1e-6);
        assert!((e[1] - 0.540_302_3).abs() < 1e-6);
        let zero = sinusoid(0.0, 8);
        assert_eq!(zero, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(time_embed(0, 100, 128).is_err());
        assert!(time_embed(101, 100, 128).is_err());
    }

    #[test]
    fn forward_shape_and_purity() {
        let net = ScoreNetwork::new(NetworkConfig::new(6), &mut Rng::new(2)).unwrap();
        let x = Rng::new(3).normal_tensor(&[5, 6]);
        let steps = [1, 10, 50, 99, 100];
        let a = net.forward(&x, &steps, 100).unwrap();
        let b = net.forward(&x, &steps, 100).unwrap();
        assert_eq!(a.shape(), &[5, 6]);
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = ScoreNetwork::new(NetworkConfig::new(6), &mut Rng::new(2)).unwrap();
        let x = Tensor::zeros(&[2, 5]);
        assert!(net.forward(&x, &[1, 2], 100).is_err());
        let x = Tensor::zeros(&[2, 6]);
        assert!(net.forward(&x, &[0, 2], 100).is_err());
        assert!(net.forward(&x, &[1], 100).is_err());
    }

    #[test]
    fn zero_output_projection_gives_zero_output() {
        let mut net = ScoreNetwork::new(NetworkConfig::new(4), &mut Rng::new(8)).unwrap();
        net.params.output.weight = Tensor::zeros(net.params.output.weight.shape());
        let x = Rng::new(1).normal_tensor(&[3, 4]);
        let out = net.forward(&x, &[5, 6, 7], 100).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroed_block_is_identity() {
        let net = ScoreNetwork::new(NetworkConfig::new(4), &mut Rng::new(8)).unwrap();
        let mut pruned = net.clone();
        pruned.params.blocks[2].second.weight = Tensor::zeros(&[64, 64]);
        pruned.params.blocks[2].second.bias = Tensor::zeros(&[64]);
        let mut removed = net.clone();
        removed.params.blocks.remove(2);
        removed.config.num_blocks = 3;
        let x = Rng::new(1).normal_tensor(&[3, 4]);
        let a = pruned.forward(&x, &[5, 6, 7], 100).unwrap();
        let b = removed.forward(&x, &[5, 6, 7], 100).unwrap();
        assert_eq!(a, b);
    }
}
