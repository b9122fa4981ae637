//! Planar point mass steered toward a fixed goal.
//!
//! `x' = clip(x + 0.1·a, [−5, 5]²)`, reward `−‖x' − (3, 3)‖`. Episodes end
//! within 0.1 of the goal or after 200 steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvSpec, Environment, StepResult};

pub const POINTMASS_GOAL: [f64; 2] = [3.0, 3.0];
pub const POINTMASS_HORIZON: usize = 200;
const STEP_GAIN: f64 = 0.1;
const BOUND: f64 = 5.0;
const GOAL_TOLERANCE: f64 = 0.1;

/// Start position drawn uniformly from the arena.
pub fn pointmass_reset(seed: u64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.random_range(-BOUND..BOUND), rng.random_range(-BOUND..BOUND)]
}

/// Pure transition; `t` is the number of steps already taken.
pub fn pointmass_step(state: [f64; 2], action: &[f64], t: usize) -> ([f64; 2], StepResult) {
    let next = [0, 1].map(|i| {
        let a = action[i].clamp(-1.0, 1.0);
        (state[i] + STEP_GAIN * a).clamp(-BOUND, BOUND)
    });
    let dist = (next[0] - POINTMASS_GOAL[0]).hypot(next[1] - POINTMASS_GOAL[1]);
    let reached = dist <= GOAL_TOLERANCE + 1e-12;
    let timeout = t + 1 >= POINTMASS_HORIZON;
    (
        next,
        StepResult {
            next_state: next.to_vec(),
            reward: -dist,
            done: reached || timeout,
            truncated: timeout && !reached,
        },
    )
}

#[derive(Clone, Debug)]
pub struct PointMass {
    spec: EnvSpec,
    state: [f64; 2],
    t: usize,
}

impl PointMass {
    pub fn new() -> Self {
        PointMass {
            spec: EnvSpec {
                name: "pointmass",
                state_dim: 2,
                action_dim: 2,
                action_bound: 1.0,
                horizon: POINTMASS_HORIZON,
                gamma_hint: 0.99,
            },
            state: [0.0, 0.0],
            t: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        self.state
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.state = pointmass_reset(seed);
        self.t = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let (next, result) = pointmass_step(self.state, action, self.t);
        self.state = next;
        self.t += 1;
        result
    }
}

/// Return of the episode that applies `a = 0` throughout: the mass never
/// moves, so every one of the 200 steps pays the starting distance.
pub fn zero_policy_return(start: [f64; 2]) -> f64 {
    let dist = (start[0] - POINTMASS_GOAL[0]).hypot(start[1] - POINTMASS_GOAL[1]);
    if dist <= GOAL_TOLERANCE + 1e-12 {
        -dist
    } else {
        -dist * POINTMASS_HORIZON as f64
    }
}
