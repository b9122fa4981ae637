//! Two-dimensional bandit with eight Gaussian reward bumps on a circle.

use std::f64::consts::PI;

use super::{EnvSpec, Environment, StepResult};

pub const N_GOALS: usize = 8;
pub const GOAL_RADIUS: f64 = 4.0;
pub const DEFAULT_CAPTURE_RADIUS: f64 = 1.0;
/// Fraction of samples that must land near a goal for it to count as covered.
pub const DEFAULT_MIN_FRACTION: f64 = 0.05;

/// `g_k = 4·(cos 2πk/8, sin 2πk/8)`.
pub fn goal_positions() -> [[f64; 2]; N_GOALS] {
    std::array::from_fn(|k| {
        let angle = 2.0 * PI * k as f64 / N_GOALS as f64;
        [GOAL_RADIUS * angle.cos(), GOAL_RADIUS * angle.sin()]
    })
}

fn sq_dist(a: &[f64], g: &[f64; 2]) -> f64 {
    (a[0] - g[0]).powi(2) + (a[1] - g[1]).powi(2)
}

/// `max_k exp(−‖a − g_k‖²/2)`.
pub fn multigoal_reward(a: &[f64]) -> f64 {
    let nearest = goal_positions()
        .iter()
        .map(|g| sq_dist(a, g))
        .fold(f64::INFINITY, f64::min);
    (-0.5 * nearest).exp()
}

/// Number of goals with at least `min_fraction` of the samples inside
/// `capture_radius`.
pub fn mode_coverage_with<'a>(
    samples: impl IntoIterator<Item = &'a [f64]>,
    capture_radius: f64,
    min_fraction: f64,
) -> usize {
    let goals = goal_positions();
    let mut hits = [0usize; N_GOALS];
    let mut total = 0usize;
    let r2 = capture_radius * capture_radius;
    for a in samples {
        total += 1;
        for (k, g) in goals.iter().enumerate() {
            if sq_dist(a, g) <= r2 {
                hits[k] += 1;
            }
        }
    }
    if total == 0 {
        return 0;
    }
    hits.iter()
        .filter(|&&h| h as f64 >= min_fraction * total as f64)
        .count()
}

pub fn mode_coverage<'a>(samples: impl IntoIterator<Item = &'a [f64]>, capture_radius: f64) -> usize {
    mode_coverage_with(samples, capture_radius, DEFAULT_MIN_FRACTION)
}

/// Stateless single-step task: the state is empty and every episode ends
/// after one action.
#[derive(Clone, Debug)]
pub struct MultiGoalBandit {
    spec: EnvSpec,
}

impl MultiGoalBandit {
    pub fn new() -> Self {
        MultiGoalBandit {
            spec: EnvSpec {
                name: "multigoal",
                state_dim: 0,
                action_dim: 2,
                action_bound: f64::INFINITY,
                horizon: 1,
                gamma_hint: 0.0,
            },
        }
    }
}

impl Default for MultiGoalBandit {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MultiGoalBandit {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        Vec::new()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        StepResult {
            next_state: Vec::new(),
            reward: multigoal_reward(action),
            done: true,
            truncated: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn goal_layout() {
        let g = goal_positions();
        assert_eq!(g[0], [4.0, 0.0]);
        let half = 2.0 * 2f64.sqrt();
        assert!((g[1][0] - half).abs() < 1e-12 && (g[1][1] - half).abs() < 1e-12);
        for p in g {
            assert!((p[0].hypot(p[1]) - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_values() {
        assert_eq!(multigoal_reward(&[4.0, 0.0]), 1.0);
        assert!((multigoal_reward(&[0.0, 0.0]) - (-8f64).exp()).abs() < 1e-15);
        assert!((multigoal_reward(&[0.0, 0.0]) - 3.3546e-4).abs() < 1e-8);
        assert!((multigoal_reward(&[2.0, 0.0]) - 0.13534).abs() < 1e-5);
    }

    #[test]
    fn coverage_cases() {
        let at_goal0 = vec![vec![4.0, 0.0]; 100];
        assert_eq!(mode_coverage(at_goal0.iter().map(Vec::as_slice), 1.0), 1);

        let everywhere: Vec<Vec<f64>> = goal_positions()
            .iter()
            .flat_map(|g| std::iter::repeat(g.to_vec()).take(50))
            .collect();
        assert_eq!(mode_coverage(everywhere.iter().map(Vec::as_slice), 1.0), 8);

        let origin = vec![vec![0.0, 0.0]; 100];
        assert_eq!(mode_coverage(origin.iter().map(Vec::as_slice), 1.0), 0);
    }

    #[test]
    fn coverage_threshold_is_inclusive() {
        // 5 of 100 samples at goal 3 is exactly the 5 % threshold.
        let g = goal_positions();
        let mut samples = vec![vec![0.0, 0.0]; 95];
        samples.extend(std::iter::repeat(g[3].to_vec()).take(5));
        assert_eq!(mode_coverage(samples.iter().map(Vec::as_slice), 1.0), 1);
        samples[99] = vec![0.0, 0.0];
        assert_eq!(mode_coverage(samples.iter().map(Vec::as_slice), 1.0), 0);
    }

    #[test]
    fn bandit_episode_is_one_step() {
        let mut env = MultiGoalBandit::new();
        assert!(env.reset(3).is_empty());
        let r = env.step(&[4.0, 0.0]);
        assert!(r.done && !r.truncated);
        assert_eq!(r.reward, 1.0);
    }

    proptest! {
        #[test]
        fn reward_bounded_and_rotation_invariant(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let r = multigoal_reward(&[x, y]);
            prop_assert!(r > 0.0 && r <= 1.0);
            let (c, s) = ((PI / 4.0).cos(), (PI / 4.0).sin());
            let rotated = multigoal_reward(&[c * x - s * y, s * x + c * y]);
            prop_assert!((r - rotated).abs() <= 1e-12 * r.max(1e-300) + 1e-300);
        }
    }
}
