//! Energy-regularized policy evaluation and improvement on finite MDPs.
//!
//! Q-tables and policies are flat `s·n_actions + a` vectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{CheckReport, Relation};
use crate::env::TabularMdp;
use crate::error::{FlacError, Result};

fn check_policy(mdp: &TabularMdp, policy: &[f64]) -> Result<()> {
    let n = mdp.n_states * mdp.n_actions;
    if policy.len() != n {
        return Err(FlacError::Shape {
            context: "policy table",
            expected: n,
            actual: policy.len(),
        });
    }
    for s in 0..mdp.n_states {
        let row = &policy[s * mdp.n_actions..(s + 1) * mdp.n_actions];
        let total: f64 = row.iter().sum();
        if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(FlacError::config(
                "policy",
                format!("row {s} is not a probability vector (sum {total})"),
            ));
        }
    }
    Ok(())
}

/// `𝓔_π(s) = Σ_a π(a|s)·e(s, a)`.
pub fn policy_energy(mdp: &TabularMdp, policy: &[f64]) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| policy[mdp.sa(s, a)] * mdp.energies[mdp.sa(s, a)]).sum())
        .collect()
}

/// Soft state value `V(s) = Σ_a π(a|s)·(Q(s, a) − α·e(s, a))`.
fn soft_value(mdp: &TabularMdp, policy: &[f64], q: &[f64], alpha: f64) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    let i = mdp.sa(s, a);
                    policy[i] * (q[i] - alpha * mdp.energies[i])
                })
                .sum()
        })
        .collect()
}

/// One exact application of `(𝒯^π Q)(s, a) = r + γ·E_{s'}[Σ_{a'} π(a'|s')Q(s', a') − α·𝓔_π(s')]`.
pub fn tabular_backup(mdp: &TabularMdp, policy: &[f64], q: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    if q.len() != policy.len() {
        return Err(FlacError::Shape {
            context: "Q table",
            expected: policy.len(),
            actual: q.len(),
        });
    }
    let v = soft_value(mdp, policy, q, alpha);
    Ok((0..mdp.n_states * mdp.n_actions)
        .map(|i| {
            let row = &mdp.transitions[i * mdp.n_states..(i + 1) * mdp.n_states];
            let next: f64 = row.iter().zip(&v).map(|(p, vs)| p * vs).sum();
            mdp.rewards[i] + mdp.gamma * next
        })
        .collect())
}

/// Exact fixed point of `𝒯^π` by solving `(I − γPΠ)Q = r − γP𝓔_π·α`.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let n = ns * na;
    let energy = policy_energy(mdp, policy);
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        let row = &mdp.transitions[i * ns..(i + 1) * ns];
        let mut penalty = 0.0;
        for (s2, &p) in row.iter().enumerate() {
            penalty += p * energy[s2];
            for a2 in 0..na {
                let j = s2 * na + a2;
                m[(i, j)] -= mdp.gamma * p * policy[j];
            }
        }
        b[i] = mdp.rewards[i] - mdp.gamma * alpha * penalty;
    }
    let sol = m
        .lu()
        .solve(&b)
        .ok_or_else(|| FlacError::fault("policy evaluation system is singular", 0))?;
    Ok(sol.iter().copied().collect())
}

/// Repeated backups from `q0` until successive iterates differ by less than
/// `tol` in sup norm. Returns the final table and the iteration count.
pub fn iterate_backup(
    mdp: &TabularMdp,
    policy: &[f64],
    q0: &[f64],
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize)> {
    let mut q = q0.to_vec();
    for it in 1..=max_iters {
        let next = tabular_backup(mdp, policy, &q, alpha)?;
        let delta = sup_dist(&next, &q);
        q = next;
        if delta < tol {
            return Ok((q, it));
        }
    }
    Ok((q, max_iters))
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A random stochastic policy with flat-Dirichlet rows.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let w: Vec<f64> = (0..n_actions).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = w.iter().sum();
        out.extend(w.iter().map(|x| x / total));
    }
    out
}

/// Per state, the distribution maximizing `E_π[Q(s, ·)] − α·𝓔_π(s)`: all mass
/// on the maximizers of `Q(s, a) − α·e(s, a)`, split uniformly among ties.
pub fn greedy_policy(mdp: &TabularMdp, q: &[f64], alpha: f64) -> Vec<f64> {
    let na = mdp.n_actions;
    let mut out = vec![0.0; mdp.n_states * na];
    for s in 0..mdp.n_states {
        let scores: Vec<f64> = (0..na).map(|a| q[mdp.sa(s, a)] - alpha * mdp.energies[mdp.sa(s, a)]).collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..na).filter(|&a| scores[a] == best).collect();
        for &a in &ties {
            out[mdp.sa(s, a)] = 1.0 / ties.len() as f64;
        }
    }
    out
}

/// Optimal Q-table of the unregularized MDP by value iteration.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Vec<f64> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![0.0; ns * na];
    for _ in 0..max_iters {
        let v: Vec<f64> = (0..ns)
            .map(|s| q[s * na..(s + 1) * na].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let next: Vec<f64> = (0..ns * na)
            .map(|i| {
                let row = &mdp.transitions[i * ns..(i + 1) * ns];
                mdp.rewards[i] + mdp.gamma * row.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
            })
            .collect();
        let delta = sup_dist(&next, &q);
        q = next;
        if delta < tol {
            break;
        }
    }
    q
}

/// `‖𝒯^πQ₁ − 𝒯^πQ₂‖_∞ ≤ γ‖Q₁ − Q₂‖_∞` over random table pairs. The report
/// carries the largest observed Lipschitz ratio against `γ`.
pub fn contraction_check(
    name: &str,
    mdp: &TabularMdp,
    policy: &[f64],
    alpha: f64,
    n_trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    if n_trials == 0 {
        return Err(FlacError::config("n_trials", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = policy.len();
    let mut worst_ratio: f64 = 0.0;
    let mut bound_ok = true;
    for _ in 0..n_trials {
        let q1: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q2: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let lhs = sup_dist(&tabular_backup(mdp, policy, &q1, alpha)?, &tabular_backup(mdp, policy, &q2, alpha)?);
        let rhs = sup_dist(&q1, &q2);
        bound_ok &= lhs <= mdp.gamma * rhs + 1e-12;
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    Ok(CheckReport::new(name, worst_ratio, mdp.gamma, Relation::Leq, 1e-12, n_trials, seed).require(bound_ok))
}

/// Iterated backups from zero converge to the linear-solve fixed point.
pub fn fixed_point_check(name: &str, mdp: &TabularMdp, policy: &[f64], alpha: f64) -> Result<CheckReport> {
    let exact = evaluate_policy(mdp, policy, alpha)?;
    let (iterated, iters) = iterate_backup(mdp, policy, &vec![0.0; policy.len()], alpha, 1e-13, 100_000)?;
    let err = sup_dist(&exact, &iterated);
    Ok(CheckReport::new(name, err, 0.0, Relation::Eq, 1e-8, iters, 0))
}

/// Exact policy iteration from a random stochastic policy. The report
/// carries the largest pointwise decrease of `Q` between rounds (must not
/// exceed zero); the soft state value must also be non-decreasing.
pub fn improvement_check(name: &str, mdp: &TabularMdp, alpha: f64, n_rounds: usize, seed: u64) -> Result<CheckReport> {
    if n_rounds == 0 {
        return Err(FlacError::config("n_rounds", "must be at least 1"));
    }
    let mut policy = random_policy(mdp.n_states, mdp.n_actions, seed);
    let mut q = evaluate_policy(mdp, &policy, alpha)?;
    let mut worst_drop = f64::NEG_INFINITY;
    let mut objective_ok = true;
    for _ in 0..n_rounds {
        let next_policy = greedy_policy(mdp, &q, alpha);
        let next_q = evaluate_policy(mdp, &next_policy, alpha)?;
        for (old, new) in q.iter().zip(&next_q) {
            worst_drop = worst_drop.max(old - new);
        }
        let v_old = soft_value(mdp, &policy, &q, alpha);
        let v_new = soft_value(mdp, &next_policy, &next_q, alpha);
        objective_ok &= v_old.iter().zip(&v_new).all(|(o, n)| *n >= o - 1e-10);
        policy = next_policy;
        q = next_q;
    }
    Ok(CheckReport::new(name, worst_drop, 0.0, Relation::Leq, 1e-10, n_rounds, seed).require(objective_ok))
}
