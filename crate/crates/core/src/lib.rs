//! Field least-energy actor-critic.
//!
//! An off-policy actor-critic whose policy generates actions by integrating a
//! learned, state-conditioned velocity field from a prior sample. The
//! discretized kinetic energy of that generation path is the regularizer, and
//! its weight is tuned by a Lagrangian dual update against an energy budget.
//!
//! Modules:
//! - [`nn`]: dense networks with reverse-mode gradients, Adam, Polyak averaging.
//! - [`flow`]: the iterative action generator and its pathwise gradient.
//! - [`agent`]: replay buffer, twin critics, actor and multiplier updates.
//! - [`env`]: the multi-goal bandit, a point-mass task and random tabular MDPs.
//! - [`theory`]: numerical checks of the identities and bounds behind the method.
//! - [`experiment`]: configuration, training/evaluation runners and artifacts.

pub mod agent;
pub mod env;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod nn;
pub mod seed;
pub mod theory;

pub use error::{FlacError, Result};
