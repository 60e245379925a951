//! Dense-network computation with exact manual backpropagation.
//!
//! Everything above this module talks to networks only through
//! [`forward`] / [`backward`] (or their trace-based fast paths) and a flat
//! [`ParameterVector`]. [`finite_difference_gradient`] is the independent
//! oracle the backward pass is checked against.

mod finite_diff;
mod network;
mod optim;
mod params;

pub use finite_diff::{central_difference, compare_gradients, finite_difference_gradient, GradientReport};
pub use network::{
    backward, backward_into, forward, forward_trace, orthogonal_init, Activation, Head, HeadOutputs, HiddenLayer,
    NetworkSpec, Trace,
};
pub use optim::{clip_global_norm, l2_norm, Adam, AdamConfig};
pub use params::{LayerShape, ParameterVector, Segment};
