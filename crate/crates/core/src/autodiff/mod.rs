//! Dense tensors and a tanh multilayer perceptron with exact derivatives.
//!
//! The network is a pure function of `(params, input)`. Three entry points
//! cover everything the losses need:
//!
//! * [`mlp_forward`] evaluates the network on a batch of rows;
//! * [`mlp_backprop`] returns reverse-mode parameter gradients of
//!   `<upstream, output>`;
//! * [`mlp_jvp`] pushes an input-space tangent through the network.
//!
//! Losses that differentiate the network in its input (time derivatives,
//! Hutchinson quadratic forms) use [`MlpTrace`], which records the primal and
//! any number of tangent sweeps and then backpropagates through both.

mod mlp;
mod tensor;

pub use mlp::{init_mlp, mlp_backprop, mlp_forward, mlp_jvp, MlpTrace};
pub use tensor::{Dual, ParamSet, Tensor};
