//! Define-by-run reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is rebuilt for every batch. Each operation appends a node
//! whose inputs all have smaller indices, so the node order is already a
//! topological order and [`Graph::backward`] is a single reverse sweep that
//! visits every node once.
//!
//! ```
//! use maskdiff::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x).data(), &[6.0]);
//! ```

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f32),
    Silu(NodeId),
    Softmax(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// Sum of `x ⊙ mask` where the mask is a non-differentiable tensor.
    MaskedSum(NodeId, Tensor),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `id`. Parameters the loss does not reach get zeros.
    pub fn get(&self, id: NodeId) -> &Tensor {
        self.grads[id.0]
            .as_ref()
            .expect("gradients are only queried for trainable leaves")
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        self.grads[id.0]
            .take()
            .expect("gradients are only queried for trainable leaves")
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, name: &str) -> Result<NodeId> {
        let value = value.ensure_finite(name)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Param,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v, "matmul")
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(x).add_bias(self.value(bias))?;
        self.push(Op::AddBias(x, bias), v, "add_bias")
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), v, "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        self.push(Op::Mul(a, b), v, "mul")
    }

    pub fn scale(&mut self, a: NodeId, factor: f32) -> Result<NodeId> {
        let v = self.value(a).scale(factor);
        self.push(Op::Scale(a, factor), v, "scale")
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * sigmoid(x));
        self.push(Op::Silu(a), v, "silu")
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).softmax_rows()?;
        self.push(Op::Softmax(a), v, "softmax")
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v, "square")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v, "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).mean());
        self.push(Op::Mean(a), v, "mean")
    }

    pub fn masked_sum(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).mul(&mask)?.sum());
        self.push(Op::MaskedSum(a, mask), v, "masked_sum")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param => {
                    grads[idx] = Some(grad);
                    continue;
                }
                Op::Constant => {}
                Op::MatMul(a, b) => {
                    let da = grad.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&grad)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::AddBias(x, b) => {
                    let db = grad.sum_rows()?;
                    accumulate(&mut grads, *b, db)?;
                    accumulate(&mut grads, *x, grad)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, grad.clone())?;
                    accumulate(&mut grads, *b, grad)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, grad.scale(-1.0))?;
                    accumulate(&mut grads, *a, grad)?;
                }
                Op::Mul(a, b) => {
                    let da = grad.mul(self.value(*b))?;
                    let db = grad.mul(self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, grad.scale(*factor))?;
                }
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let local = x.map(|v| {
                        let s = sigmoid(v);
                        s * (1.0 + v * (1.0 - s))
                    });
                    accumulate(&mut grads, *a, grad.mul(&local)?)?;
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut da = grad.clone();
                    for (i, row) in da.data_mut().chunks_mut(c).enumerate() {
                        let yr = y.row(i);
                        let dot: f32 = row.iter().zip(yr).map(|(g, s)| g * s).sum();
                        for (g, s) in row.iter_mut().zip(yr) {
                            *g = s * (*g - dot);
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Square(a) => {
                    let da = grad.mul(&self.value(*a).scale(2.0))?;
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Sum(a) => {
                    let g = grad.data()[0];
                    accumulate(&mut grads, *a, Tensor::full(self.value(*a).shape(), g))?;
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let g = grad.data()[0] / x.len() as f32;
                    accumulate(&mut grads, *a, Tensor::full(x.shape(), g))?;
                }
                Op::MaskedSum(a, mask) => {
                    let g = grad.data()[0];
                    accumulate(&mut grads, *a, mask.scale(g))?;
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Param) {
                match &grads[idx] {
                    Some(g) if !g.all_finite() => {
                        return Err(Error::NonFinite(format!("gradient of node {idx}")));
                    }
                    Some(_) => {}
                    None => grads[idx] = Some(Tensor::zeros(node.value.shape())),
                }
            } else {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) -> Result<()> {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).data(), &[6.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.sum(c).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 2]));
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(f32::MAX));
        assert!(matches!(g.square(x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        // f = sum(x + x*x) at x = [1, 2] -> df/dx = 1 + 2x
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.add(x, sq).unwrap();
        let y = g.sum(s).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).data(), &[3.0, 5.0]);
    }

    // Central finite differences against every op in the supported set.
    fn check_op(build: impl Fn(&mut Graph, NodeId) -> NodeId, shape: &[usize], seed: u64) {
        let mut rng = Rng::new(seed);
        let x0 = rng.normal_tensor(shape);
        let loss_at = |x: &Tensor| {
            let mut g = Graph::new();
            let id = g.param(x.clone());
            let out = build(&mut g, id);
            g.value(out).item().unwrap() as f64
        };
        let mut g = Graph::new();
        let id = g.param(x0.clone());
        let out = build(&mut g, id);
        let grads = g.backward(out).unwrap();
        let analytic = grads.get(id);
        let h = 1e-2f32;
        for i in 0..x0.len() {
            let mut plus = x0.clone();
            plus.data_mut()[i] += h;
            let mut minus = x0.clone();
            minus.data_mut()[i] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h as f64);
            let a = analytic.data()[i] as f64;
            let err = (a - fd).abs() / (fd.abs().max(a.abs()).max(1e-2));
            assert!(err < 1e-2, "element {i}: analytic {a} vs fd {fd}");
        }
    }

    #[test]
    fn finite_differences_per_op() {
        let w = Tensor::new(vec![3, 2], vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9]).unwrap();
        let b = Tensor::new(vec![2], vec![0.1, -0.2]).unwrap();
        let other = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.6]).unwrap();
        let mask = Tensor::new(vec![2, 3], vec![1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();

        check_op(
            |g, x| {
                let wn = g.constant(w.clone());
                let bn = g.constant(b.clone());
                let h = g.linear(x, wn, bn).unwrap();
                let s = g.square(h).unwrap();
                g.sum(s).unwrap()
            },
            &[2, 3],
            1,
        );
        check_op(
            |g, x| {
                let o = g.constant(other.clone());
                let m = g.mul(x, o).unwrap();
                let a = g.add(m, x).unwrap();
                let s = g.sub(a, o).unwrap();
                let q = g.square(s).unwrap();
                g.mean(q).unwrap()
            },
            &[2, 3],
            2,
        );
        check_op(
            |g, x| {
                let s = g.silu(x).unwrap();
                let q = g.square(s).unwrap();
                let sc = g.scale(q, 0.5).unwrap();
                g.sum(sc).unwrap()
            },
            &[2, 3],
            3,
        );
        check_op(
            |g, x| {
                let o = g.constant(other.clone());
                let s = g.softmax(x).unwrap();
                let m = g.mul(s, o).unwrap();
                g.sum(m).unwrap()
            },
            &[2, 3],
            4,
        );
        check_op(
            |g, x| {
                let q = g.square(x).unwrap();
                g.masked_sum(q, mask.clone()).unwrap()
            },
            &[2, 3],
            5,
        );
    }

    #[test]
    fn backward_is_linear() {
        // grad(a f + b g) == a grad f + b grad g with f = sum(x^2), g = sum(silu(x))
        let mut rng = Rng::new(11);
        let x0 = rng.normal_tensor(&[4, 3]);
        let (a, b) = (0.75f32, -2.0f32);

        let grad_of = |wf: f32, wg: f32| {
            let mut g = Graph::new();
            let x = g.param(x0.clone());
            let sq = g.square(x).unwrap();
            let f = g.sum(sq).unwrap();
            let si = g.silu(x).unwrap();
            let gg = g.sum(si).unwrap();
            let f = g.scale(f, wf).unwrap();
            let gg = g.scale(gg, wg).unwrap();
            let total = g.add(f, gg).unwrap();
            g.backward(total).unwrap().take(x)
        };
        let combined = grad_of(a, b);
        let f_only = grad_of(1.0, 0.0);
        let g_only = grad_of(0.0, 1.0);
        for i in 0..combined.len() {
            let expected = a * f_only.data()[i] + b * g_only.data()[i];
            assert!((combined.data()[i] - expected).abs() <= 1e-5 * expected.abs().max(1.0));
        }
    }
}
