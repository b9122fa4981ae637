//! Desk-scale tasks.

mod bandit;
mod pointmass;
mod tabular;

pub use bandit::{
    goal_positions, mode_coverage, mode_coverage_with, multigoal_reward, MultiGoalBandit,
    DEFAULT_CAPTURE_RADIUS, DEFAULT_MIN_FRACTION, GOAL_RADIUS, N_GOALS,
};
pub use pointmass::{
    pointmass_reset, pointmass_step, zero_policy_return, PointMass, POINTMASS_GOAL, POINTMASS_HORIZON,
};
pub use tabular::{make_random_mdp, TabularMdp};

use crate::error::{FlacError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Half-width of the action box; infinite for unbounded actions.
    pub action_bound: f64,
    pub horizon: usize,
    pub gamma_hint: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The episode is over.
    pub done: bool,
    /// The episode ended only because the horizon was reached; the next
    /// state is still bootstrappable.
    pub truncated: bool,
}

/// An episodic environment with an internal state.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepResult;
}

pub const ENV_NAMES: [&str; 2] = ["multigoal", "pointmass"];

/// Builds an environment by name.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "multigoal" => Ok(Box::new(MultiGoalBandit::new())),
        "pointmass" => Ok(Box::new(PointMass::new())),
        other => Err(FlacError::config(
            "env.name",
            format!("unknown environment `{other}` (known: {})", ENV_NAMES.join(", ")),
        )),
    }
}
