//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use flac::flow::{pathwise_grad, sample_action, SolverConfig};
use flac::nn::{Activation, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Outcome of a batch of directional finite-difference probes.
#[derive(Clone, Debug)]
pub struct ProbeStats {
    /// Probes that entered the comparison.
    pub probes: usize,
    /// Draws discarded because the unclamped action came within the margin of
    /// the box boundary.
    pub rejected_near_boundary: usize,
    /// Clamp-boundary hits among the compared probes (kept for the report;
    /// rejection makes it zero).
    pub clamp_hits: usize,
    pub max_rel_err: f64,
}

const BOUNDARY_MARGIN: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;

fn objective(actor: &Params, s: &[f64], cfg: &SolverConfig, seed: u64, cot: &[f64], w: f64) -> (f64, bool) {
    let t = sample_action(actor, s, cfg, seed).expect("generation succeeds");
    let x_n = t.latents.last().expect("terminal latent");
    let near = x_n.iter().any(|v| v.abs() > cfg.action_bound - BOUNDARY_MARGIN);
    let value = cot.iter().zip(&t.action).map(|(c, a)| c * a).sum::<f64>() + w * t.energy;
    (value, near)
}

/// Compares the pathwise gradient of `c·a + w·Ê` against a central difference
/// along a random parameter direction, for `n` probes through the two-step
/// midpoint solver. Draws whose action comes near the box boundary are
/// replaced, so no compared probe touches the clamp.
pub fn midpoint_gradient_probes(n: usize, seed: u64) -> ProbeStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ds, da) = (3, 2);
    let mut stats = ProbeStats {
        probes: 0,
        rejected_near_boundary: 0,
        clamp_hits: 0,
        max_rel_err: 0.0,
    };
    while stats.probes < n {
        let sigma = if stats.probes % 2 == 0 { 0.0 } else { 0.1 };
        let cfg = SolverConfig { sigma, ..SolverConfig::default() };
        let mut actor = Params::init(&[ds + 1 + da, 16, 16, da], Activation::Elu, rng.random()).unwrap();
        // shrink the field so most draws stay inside the box
        let flat: Vec<f64> = actor.flat().iter().map(|v| 0.5 * v).collect();
        actor.set_flat(&flat).unwrap();
        let s: Vec<f64> = (0..ds).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..da).map(|_| rng.sample(StandardNormal)).collect();
        let w: f64 = rng.random_range(0.0..2.0);
        let gen_seed: u64 = rng.random();

        let (_, near) = objective(&actor, &s, &cfg, gen_seed, &cot, w);
        if near {
            stats.rejected_near_boundary += 1;
            continue;
        }
        let grad = pathwise_grad(&actor, &s, &cfg, gen_seed, &cot, w).unwrap().flat();
        let base = actor.flat();
        let mut dir: Vec<f64> = (0..base.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();

        let shifted = |h: f64| {
            let mut p = actor.clone();
            let v: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + h * d).collect();
            p.set_flat(&v).unwrap();
            objective(&p, &s, &cfg, gen_seed, &cot, w)
        };
        let (plus, hit_p) = shifted(FD_STEP);
        let (minus, hit_m) = shifted(-FD_STEP);
        if hit_p || hit_m {
            stats.clamp_hits += 1;
        }
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
        stats.max_rel_err = stats.max_rel_err.max(rel);
        stats.probes += 1;
    }
    stats
}
