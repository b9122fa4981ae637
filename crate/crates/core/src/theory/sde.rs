//! Path-space identities for the generation SDE.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CheckReport, Relation};
use crate::error::{FlacError, Result};
use crate::flow::{generate, Prior, Rollout, Scheme, SolverConfig};
use crate::nn::{Activation, Layer, Params};

/// Per-path log Radon–Nikodym derivative of the controlled path measure
/// against the driftless reference, paired with the per-path energy.
#[derive(Clone, Debug, PartialEq)]
pub struct GirsanovSamples {
    pub log_rn: Vec<f64>,
    /// `Ê / σ²` for the same paths.
    pub scaled_energy: Vec<f64>,
}

/// Evaluates `Σ_k ½‖β_k‖²Δτ + β_k·√Δτ·z_k` with `β = u/σ` on every row of a
/// stochastic rollout.
pub fn log_rn_samples(rollout: &Rollout, sigma: f64, dt: f64) -> Result<GirsanovSamples> {
    if !(sigma > 0.0) {
        return Err(FlacError::NotApplicable(
            "path KL is undefined without diffusion (sigma = 0)".into(),
        ));
    }
    let n = rollout.batch();
    let mut log_rn = vec![0.0; n];
    let sqrt_dt = dt.sqrt();
    for (u, z) in rollout.drifts.iter().zip(&rollout.noise) {
        for i in 0..n {
            let mut quad = 0.0;
            let mut mart = 0.0;
            for (uj, zj) in u.row(i).iter().zip(z.row(i)) {
                let beta = uj / sigma;
                quad += 0.5 * beta * beta * dt;
                mart += beta * sqrt_dt * zj;
            }
            log_rn[i] += quad + mart;
        }
    }
    let scaled_energy = rollout.energy.iter().map(|e| e / (sigma * sigma)).collect();
    Ok(GirsanovSamples { log_rn, scaled_energy })
}

/// Paired comparison of the Monte Carlo path KL against `𝓔/σ²`, accepting a
/// gap of up to four standard errors of the per-path difference.
pub fn girsanov_compare(name: &str, samples: &GirsanovSamples, seed: u64) -> CheckReport {
    let n = samples.log_rn.len();
    let nf = n as f64;
    let kl = samples.log_rn.iter().sum::<f64>() / nf;
    let energy = samples.scaled_energy.iter().sum::<f64>() / nf;
    let diffs: Vec<f64> = samples
        .log_rn
        .iter()
        .zip(&samples.scaled_energy)
        .map(|(a, b)| a - b)
        .collect();
    let mean_diff = diffs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let se = (var / nf).sqrt();
    CheckReport::new(name, kl, energy, Relation::Eq, 4.0 * se + 1e-12, n, seed)
}

/// Which log Radon–Nikodym estimator the Girsanov check uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Correct,
    /// Subtracts the quadratic term instead of adding it. Exists only to
    /// exercise the failure path of the check.
    WrongSign,
}

/// Girsanov identity `KL(ℙ^θ ‖ ℙ^ref) = 𝓔/σ²` for a field evaluated at state
/// `s`, with a standard Gaussian start and Euler–Maruyama paths.
pub fn girsanov_kl_check(
    name: &str,
    drift: &Params,
    s: &[f64],
    sigma: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<CheckReport> {
    girsanov_kl_check_with(name, drift, s, sigma, n_paths, n_steps, seed, Estimator::Correct)
}

#[allow(clippy::too_many_arguments)]
pub fn girsanov_kl_check_with(
    name: &str,
    drift: &Params,
    s: &[f64],
    sigma: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<CheckReport> {
    if !(sigma > 0.0) {
        return Err(FlacError::NotApplicable(
            "path KL is undefined without diffusion (sigma = 0)".into(),
        ));
    }
    if n_paths == 0 {
        return Err(FlacError::config("n_paths", "must be at least 1"));
    }
    let cfg = SolverConfig {
        n_steps,
        scheme: Scheme::Euler,
        sigma,
        prior: Prior::StandardGaussian,
        action_bound: f64::INFINITY,
    };
    let states = Array2::from_shape_fn((n_paths, s.len()), |(_, j)| s[j]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rollout = generate(drift, &states, &cfg, &mut rng, false)?;
    let mut samples = log_rn_samples(&rollout, sigma, cfg.dt())?;
    if estimator == Estimator::WrongSign {
        for (l, e) in samples.log_rn.iter_mut().zip(&samples.scaled_energy) {
            *l -= 2.0 * e;
        }
    }
    Ok(girsanov_compare(name, &samples, seed))
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Terminal-marginal KL never exceeds the path KL. With a constant drift and
/// standard Gaussian start both terminal laws are Gaussians with covariance
/// `(1 + σ²)I`, so the terminal KL is exact; the displacement and energy are
/// measured on the generator itself.
pub fn dpi_terminal_check(name: &str, c: &[f64], sigma: f64) -> Result<CheckReport> {
    if !(sigma > 0.0) {
        return Err(FlacError::NotApplicable(
            "path KL is undefined without diffusion (sigma = 0)".into(),
        ));
    }
    let field = crate::flow::fields::constant(0, c);
    let cfg = SolverConfig {
        n_steps: 16,
        scheme: Scheme::Euler,
        sigma: 0.0,
        prior: Prior::StandardGaussian,
        action_bound: f64::INFINITY,
    };
    // The drift is state-independent, so a single noiseless path gives the
    // exact mean displacement and energy.
    let rollout = generate(&field, &Array2::zeros((1, 0)), &cfg, &mut ChaCha8Rng::seed_from_u64(0), false)?;
    let disp: Vec<f64> = (&rollout.latents[cfg.n_steps] - &rollout.latents[0]).row(0).to_vec();
    let terminal_kl = sq_norm(&disp) / (2.0 * (1.0 + sigma * sigma));
    let path_kl = rollout.energy[0] / (sigma * sigma);
    Ok(CheckReport::new(name, terminal_kl, path_kl, Relation::Leq, 1e-10, 1, 0))
}

/// Translation fields that move every point by the same displacement `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Translation {
    /// `u ≡ m`: the constant-speed geodesic.
    Constant,
    /// `u(τ) = 2mτ`: same displacement, accelerating.
    LinearRamp,
}

/// Single-layer field realizing a translation flow (no state input).
pub fn translation_field(m: &[f64], kind: Translation) -> Params {
    let da = m.len();
    let mut weight = Array2::zeros((da, 1 + da));
    let bias = match kind {
        Translation::Constant => Array1::from(m.to_vec()),
        Translation::LinearRamp => {
            for (j, mj) in m.iter().enumerate() {
                weight[[j, 0]] = 2.0 * mj;
            }
            Array1::zeros(da)
        }
    };
    Params::from_layers(
        vec![Layer {
            weight,
            bias,
            activation: Activation::Identity,
        }],
        0,
    )
    .expect("single layer")
}

/// `𝒲₂²(μ₀, π_θ) ≤ 2𝓔` for a deterministic translation flow, where the
/// Wasserstein distance of a rigid shift is the squared displacement norm.
/// The midpoint rule recovers the displacement of these fields exactly and
/// their energy up to an `O(Δτ²)` quadrature error.
pub fn benamou_bound_check(
    name: &str,
    m: &[f64],
    kind: Translation,
    n_steps: usize,
    seed: u64,
) -> Result<CheckReport> {
    let field = translation_field(m, kind);
    let cfg = SolverConfig {
        n_steps,
        scheme: Scheme::Midpoint,
        sigma: 0.0,
        prior: Prior::StandardGaussian,
        action_bound: f64::INFINITY,
    };
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rollout = generate(&field, &Array2::zeros((n, 0)), &cfg, &mut rng, false)?;
    let disp = &rollout.latents[n_steps] - &rollout.latents[0];
    // Every particle moves by the same vector; average to suppress rounding.
    let mean_disp: Vec<f64> = disp.mean_axis(ndarray::Axis(0)).expect("non-empty").to_vec();
    let w2_sq = sq_norm(&mean_disp);
    let two_energy = 2.0 * rollout.mean_energy();
    Ok(CheckReport::new(name, w2_sq, two_energy, Relation::Leq, 1e-10, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::fields;

    #[test]
    fn zero_drift_gives_zero_on_both_sides() {
        let r = girsanov_kl_check("z", &fields::constant(0, &[0.0, 0.0]), &[], 1.0, 500, 8, 1).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn constant_drift_matches_closed_form() {
        let r = girsanov_kl_check("c", &fields::constant(0, &[1.0, 0.0]), &[], 1.0, 20_000, 8, 2).unwrap();
        assert!((r.rhs - 0.5).abs() < 1e-12);
        assert!(r.pass, "{r}");
        let r = girsanov_kl_check("c", &fields::constant(0, &[1.0, 1.0]), &[], 2.0, 20_000, 8, 3).unwrap();
        assert!((r.rhs - 0.25).abs() < 1e-12);
        assert!(r.pass, "{r}");
    }

    #[test]
    fn non_constant_field_passes() {
        let r = girsanov_kl_check("lin", &fields::contracting(0, 2), &[], 0.8, 20_000, 16, 4).unwrap();
        assert!(r.rhs > 0.0);
        assert!(r.pass, "{r}");
    }

    #[test]
    fn wrong_sign_estimator_is_caught() {
        let field = fields::constant(0, &[1.0, 0.0]);
        let cfg = SolverConfig {
            n_steps: 8,
            scheme: Scheme::Euler,
            sigma: 1.0,
            prior: Prior::StandardGaussian,
            action_bound: f64::INFINITY,
        };
        let rollout = generate(&field, &Array2::zeros((20_000, 0)), &cfg, &mut ChaCha8Rng::seed_from_u64(5), false).unwrap();
        let mut samples = log_rn_samples(&rollout, 1.0, cfg.dt()).unwrap();
        // Flip the quadratic term: log RN − 2·(½‖β‖²) per path.
        for (l, e) in samples.log_rn.iter_mut().zip(&samples.scaled_energy) {
            *l -= 2.0 * e;
        }
        assert!(!girsanov_compare("bad", &samples, 5).pass);
    }

    #[test]
    fn zero_sigma_is_not_applicable() {
        let f = fields::constant(0, &[1.0]);
        assert!(matches!(
            girsanov_kl_check("x", &f, &[], 0.0, 10, 4, 0),
            Err(FlacError::NotApplicable(_))
        ));
        assert!(matches!(dpi_terminal_check("x", &[1.0], 0.0), Err(FlacError::NotApplicable(_))));
    }

    #[test]
    fn dpi_examples() {
        let r = dpi_terminal_check("d", &[0.0, 0.0], 1.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.pass);
        let r = dpi_terminal_check("d", &[1.0, 0.0], 1.0).unwrap();
        assert!((r.lhs - 0.25).abs() < 1e-12 && (r.rhs - 0.5).abs() < 1e-12 && r.pass);
        let r = dpi_terminal_check("d", &[2.0, 0.0], 1.0).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12 && (r.rhs - 2.0).abs() < 1e-12 && r.pass);
    }

    #[test]
    fn benamou_examples() {
        let m = [1.5, -0.5];
        let norm = 2.5;
        let r = benamou_bound_check("b", &m, Translation::Constant, 32, 0).unwrap();
        assert!((r.lhs - norm).abs() < 1e-12 && (r.rhs - norm).abs() < 1e-12 && r.pass);
        let r = benamou_bound_check("b", &m, Translation::LinearRamp, 32, 0).unwrap();
        assert!((r.lhs - norm).abs() < 1e-12, "{}", r.lhs);
        // Midpoint quadrature of ∫(2τ)²dτ over N cells is 4/3 − 1/(3N²).
        let n = 32.0f64;
        assert!((r.rhs - norm * (4.0 / 3.0 - 1.0 / (3.0 * n * n))).abs() < 1e-12, "{}", r.rhs);
        assert!(r.rhs > r.lhs + 0.5 && r.pass);
        let r = benamou_bound_check("b", &[0.0, 0.0], Translation::LinearRamp, 8, 0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }
}
