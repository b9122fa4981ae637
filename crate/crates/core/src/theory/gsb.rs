//! Closed-form Boltzmann tilt of a reference measure on a finite grid.

use super::{CheckReport, Relation};
use crate::error::{FlacError, Result};

pub const MIRROR_MAX_ITERS: usize = 10_000;
/// Stop once successive iterates are this close in total variation.
pub const MIRROR_TOL: f64 = 1e-10;

/// A probability vector over a finite set of support points.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl GridDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(FlacError::Shape {
                context: "grid distribution",
                expected: support.len(),
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(FlacError::config("probs", "must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FlacError::config("probs", format!("sum to {total}, not 1")));
        }
        Ok(GridDistribution { support, probs })
    }

    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    /// Discretized normal density, renormalized over the grid.
    pub fn gaussian(support: Vec<f64>, mean: f64, std: f64) -> Result<Self> {
        let w: Vec<f64> = support.iter().map(|x| (-0.5 * ((x - mean) / std).powi(2)).exp()).collect();
        let total: f64 = w.iter().sum();
        Self::new(support, w.iter().map(|v| v / total).collect())
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn normalize_log(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

fn check_inputs(g: &[f64], mu: &GridDistribution, alpha: f64) -> Result<()> {
    if g.len() != mu.len() {
        return Err(FlacError::Shape {
            context: "cost vector",
            expected: mu.len(),
            actual: g.len(),
        });
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(FlacError::config("alpha", "must be positive and finite"));
    }
    Ok(())
}

/// `p* ∝ μ_ref · exp(−𝒢/α)`, computed in log space.
pub fn boltzmann_closed_form(g: &[f64], mu: &GridDistribution, alpha: f64) -> Result<Vec<f64>> {
    check_inputs(g, mu, alpha)?;
    let log_w: Vec<f64> = mu.probs.iter().zip(g).map(|(m, gi)| m.ln() - gi / alpha).collect();
    Ok(normalize_log(&log_w))
}

/// `α·KL(p ‖ μ_ref) + E_p[𝒢]`.
pub fn gsb_objective(p: &[f64], g: &[f64], mu: &GridDistribution, alpha: f64) -> f64 {
    p.iter()
        .zip(g)
        .zip(&mu.probs)
        .map(|((pi, gi), mi)| {
            let kl = if *pi > 0.0 { pi * (pi / mi).ln() } else { 0.0 };
            alpha * kl + pi * gi
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MirrorDescent {
    pub p: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Total variation between the last two iterates.
    pub residual: f64,
}

/// Exponentiated-gradient descent on the simplex from the uniform start,
/// with step `η = 0.5/α`. Each step maps `log p ↦ log p − η·∇`, so the
/// log-space error to the optimum halves every iteration.
pub fn mirror_descent(g: &[f64], mu: &GridDistribution, alpha: f64) -> Result<MirrorDescent> {
    check_inputs(g, mu, alpha)?;
    let n = g.len();
    let eta = 0.5 / alpha;
    let support_ok: Vec<bool> = mu.probs.iter().map(|m| *m > 0.0).collect();
    let mut log_p: Vec<f64> = support_ok
        .iter()
        .map(|&ok| if ok { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    let mut p = normalize_log(&log_p);
    let mut residual = f64::INFINITY;
    for it in 1..=MIRROR_MAX_ITERS {
        for i in 0..n {
            if support_ok[i] {
                let grad = alpha * ((p[i] / mu.probs[i]).ln() + 1.0) + g[i];
                log_p[i] = p[i].ln() - eta * grad;
            }
        }
        let next = normalize_log(&log_p);
        residual = total_variation(&next, &p);
        p = next;
        if residual < MIRROR_TOL {
            return Ok(MirrorDescent { p, iterations: it, converged: true, residual });
        }
    }
    Ok(MirrorDescent {
        p,
        iterations: MIRROR_MAX_ITERS,
        converged: false,
        residual,
    })
}

/// Closed-form Boltzmann tilt against the numerically minimized objective,
/// compared in total variation within `1e-6`.
pub fn gsb_boltzmann_check(name: &str, g: &[f64], mu: &GridDistribution, alpha: f64) -> Result<CheckReport> {
    let closed = boltzmann_closed_form(g, mu, alpha)?;
    let md = mirror_descent(g, mu, alpha)?;
    let tv = total_variation(&closed, &md.p);
    Ok(CheckReport::new(name, tv, 0.0, Relation::Eq, 1e-6, g.len(), 0).require(md.converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_distributions() {
        assert!(GridDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(GridDistribution::new(vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(GridDistribution::new(vec![0.0], vec![0.5, 0.5]).is_err());
        assert!(GridDistribution::uniform(vec![]).is_err());
    }

    #[test]
    fn constant_cost_returns_reference() {
        let mu = GridDistribution::new(vec![0.0, 1.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        let p = boltzmann_closed_form(&[4.0, 4.0, 4.0], &mu, 0.7).unwrap();
        assert!(total_variation(&p, mu.probs()) < 1e-15);
    }

    #[test]
    fn large_alpha_approaches_reference() {
        let mu = GridDistribution::gaussian((0..11).map(|i| i as f64).collect(), 5.0, 2.0).unwrap();
        let g: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let p = boltzmann_closed_form(&g, &mu, 1e6).unwrap();
        assert!(total_variation(&p, mu.probs()) < 1e-5);
        assert!(gsb_boltzmann_check("big", &g, &mu, 1e6).unwrap().pass);
    }

    #[test]
    fn two_point_softmax() {
        let mu = GridDistribution::uniform(vec![0.0, 1.0]).unwrap();
        let p = boltzmann_closed_form(&[0.0, 1.0], &mu, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.73106).abs() < 1e-5 && (p[1] - 0.26894).abs() < 1e-5);
        let md = mirror_descent(&[0.0, 1.0], &mu, 1.0).unwrap();
        assert!(md.converged && md.iterations < 100);
        assert!(total_variation(&p, &md.p) < 1e-9);
    }

    #[test]
    fn closed_form_minimizes_objective() {
        let mu = GridDistribution::gaussian((0..9).map(|i| i as f64 * 0.5).collect(), 2.0, 1.0).unwrap();
        let g: Vec<f64> = (0..9).map(|i| ((i * 7) % 5) as f64).collect();
        let alpha = 0.4;
        let p = boltzmann_closed_form(&g, &mu, alpha).unwrap();
        let best = gsb_objective(&p, &g, &mu, alpha);
        for k in 0..9 {
            let mut q = p.clone();
            q[k] += 0.01;
            let t: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= t);
            assert!(gsb_objective(&q, &g, &mu, alpha) > best);
        }
    }

    proptest! {
        #[test]
        fn closed_form_agrees_with_mirror_descent(
            g in proptest::collection::vec(-3.0f64..3.0, 2..12),
            alpha in 0.05f64..20.0,
        ) {
            let support: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
            let mu = GridDistribution::gaussian(support, 1.0, 3.0).unwrap();
            let r = gsb_boltzmann_check("p", &g, &mu, alpha).unwrap();
            prop_assert!(r.pass, "{}", r);
        }
    }
}
