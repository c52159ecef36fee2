//! Dense `f64` tensors and a tape-based reverse-mode differentiator.

mod array;
mod gradcheck;
mod graph;
mod kernels;
mod optim;

pub use array::Tensor;
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use optim::{adam_step, AdamConfig, Parameter};

pub(crate) use kernels::softmax_slice;
