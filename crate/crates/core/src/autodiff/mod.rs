//! Dense f64 tensors, a reverse-mode tape, Adam, and a finite-difference
//! gradient checker.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use tensor::{argmax, softmax, Tensor};
