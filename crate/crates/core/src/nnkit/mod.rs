//! Minimal neural-network kit: tensors, a per-loss reverse-mode tape,
//! multilayer perceptrons, Adam, a finite-difference checker and a binary
//! checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod gradcheck;
pub mod mlp;
pub mod tensor;

pub use adam::Adam;
pub use gradcheck::finite_diff_check;
pub use graph::{Gradients, Graph, Var};
pub use mlp::{mlp_forward, Activation, Linear, LinearVars, Mlp, MlpVars, Parameters};
pub use tensor::Tensor;
