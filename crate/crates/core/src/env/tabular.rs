//! Finite MDPs with a per-action generation-energy table.
//!
//! The expected generation energy of a tabular policy is modelled as
//! `𝓔_π(s) = Σ_a π(a|s)·e(s, a)`: independent of any Q-function and linear
//! in the policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `P[s, a, s']` flattened as `(s·n_actions + a)·n_states + s'`.
    pub transitions: Vec<f64>,
    /// `r[s, a]` flattened as `s·n_actions + a`.
    pub rewards: Vec<f64>,
    /// `e[s, a] ≥ 0`, same layout as `rewards`.
    pub energies: Vec<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    #[inline]
    pub fn sa(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.sa(s, a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Largest deviation of any transition row sum from one.
    pub fn max_row_error(&self) -> f64 {
        (0..self.n_states * self.n_actions)
            .map(|i| {
                let row = &self.transitions[i * self.n_states..(i + 1) * self.n_states];
                (row.iter().sum::<f64>() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Random MDP with flat-Dirichlet transition rows and uniform `[0, 1]`
/// rewards and energies. Discount defaults to 0.9.
pub fn make_random_mdp(n_states: usize, n_actions: usize, seed: u64) -> TabularMdp {
    assert!(n_states >= 1 && n_actions >= 1, "MDP sizes must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let draws: Vec<f64> = (0..n_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        transitions.extend(draws.iter().map(|d| d / total));
    }
    let rewards = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let energies = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    TabularMdp {
        n_states,
        n_actions,
        transitions,
        rewards,
        energies,
        gamma: 0.9,
    }
}
