//! The mask-weighted denoising score-matching objective.
//!
//! `L = (1/B) Σ_b ‖(ε_b − s_θ(√ᾱ_t x₀ + √(1−ᾱ_t) ε_b, t_b)) ⊙ m_b‖²`

use crate::diffusion::schedule::{forward_perturb, NoiseSchedule};
use crate::error::{Error, Result};
use crate::network::ScoreNetwork;
use crate::numerics::{Graph, NodeId, Tensor};

/// One minibatch worth of loss inputs.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub x0: &'a Tensor,
    pub steps: &'a [usize],
    pub eps: &'a Tensor,
}

pub struct LossGraph {
    pub graph: Graph,
    pub loss: NodeId,
    pub params: Vec<NodeId>,
}

/// Records the loss on a fresh graph. `mask = None` is the plain DSM loss.
pub fn dsm_loss_graph(
    net: &ScoreNetwork,
    batch: LossBatch<'_>,
    mask: Option<&Tensor>,
    schedule: &NoiseSchedule,
) -> Result<LossGraph> {
    if let Some(m) = mask {
        if m.shape() != batch.x0.shape() {
            return Err(Error::shape("masked_dsm_loss mask", m.shape(), batch.x0.shape()));
        }
    }
    let xt = forward_perturb(batch.x0, batch.steps, batch.eps, schedule)?;
    let mut graph = Graph::new();
    let x = graph.constant(xt);
    let fwd = net.forward_graph(&mut graph, x, batch.steps, schedule.horizon())?;
    let eps = graph.constant(batch.eps.clone());
    let diff = graph.sub(eps, fwd.output)?;
    let sq = graph.square(diff)?;
    let total = match mask {
        Some(m) => graph.masked_sum(sq, m.clone())?,
        None => graph.sum(sq)?,
    };
    let loss = graph.scale(total, 1.0 / batch.steps.len() as f32)?;
    Ok(LossGraph {
        graph,
        loss,
        params: fwd.params,
    })
}

pub fn masked_dsm_loss(
    net: &ScoreNetwork,
    batch: LossBatch<'_>,
    mask: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<f32> {
    let lg = dsm_loss_graph(net, batch, Some(mask), schedule)?;
    lg.graph.value(lg.loss).item()
}

pub fn dsm_loss(net: &ScoreNetwork, batch: LossBatch<'_>, schedule: &NoiseSchedule) -> Result<f32> {
    let lg = dsm_loss_graph(net, batch, None, schedule)?;
    lg.graph.value(lg.loss).item()
}

/// Loss value and gradients in the network's canonical parameter order.
pub fn loss_and_grads(
    net: &ScoreNetwork,
    batch: LossBatch<'_>,
    mask: Option<&Tensor>,
    schedule: &NoiseSchedule,
) -> Result<(f32, Vec<Tensor>)> {
    let lg = dsm_loss_graph(net, batch, mask, schedule)?;
    let value = lg.graph.value(lg.loss).item()?;
    let mut grads = lg.graph.backward(lg.loss)?;
    let out = lg.params.iter().map(|&p| grads.take(p)).collect();
    Ok((value, out))
}
