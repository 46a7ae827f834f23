//! Minimal reverse-mode automatic differentiation over dense tensors.

mod tape;
mod tensor;

pub use tape::{sgd_step, Gradients, Op, Tape, VarId};
pub use tensor::Tensor;
