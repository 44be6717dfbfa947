//! Tensors, reverse-mode differentiation, random numbers, the symmetric
//! eigensolver and the parameter checkpoint format.

mod autodiff;
pub mod checkpoint;
mod eigen;
mod gradcheck;
mod rng;
mod tensor;

pub use autodiff::{Activation, Graph, MixRows, Node, Var, ZERO_FILL};
pub use eigen::top_eigvecs;
pub use gradcheck::{grad_check, grad_check_graph};
pub use rng::Rng;
pub use tensor::{softmax, Tensor};
