//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use tape::{masked_softmax, Gradients, Tape, Var, LAYER_NORM_EPS, MASK_OFFSET};
pub use tensor::Tensor;
