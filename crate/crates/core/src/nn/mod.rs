//! Minimal dense-network stack: parameters, taped forward passes, backward
//! passes, Adam and Polyak averaging.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{AdamState, DEFAULT_LR};
pub use mlp::{Activation, Backward, Gradients, Layer, LayerGrad, Params, Tape};

/// Target-network averaging rate used when none is configured.
pub const DEFAULT_POLYAK: f64 = 0.005;
