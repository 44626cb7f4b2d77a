//! Tensor arithmetic, autodiff, optimisation and random streams.

mod graph;
mod optim;
mod rng;
mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use optim::{AdamState, LrSchedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_LR};
pub use rng::{splitmix64, Rng};
pub use tensor::Tensor;
pub(crate) use tensor::softmax_in_place;
