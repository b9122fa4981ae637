//! The iterative action generator.
//!
//! An action is produced by integrating `dX = u_θ(s, τ, X) dτ + σ dW` from a
//! prior draw `X₀` over `τ ∈ [0, 1]` in `N` equal steps. Along the way the
//! generator accumulates the discretized kinetic energy
//! `Ê = Δτ · Σ_k ½‖u_k‖²` over the drift evaluations that advance the state.
//!
//! Generation is batched: one row per sample. With tapes recorded, the whole
//! path can be differentiated with respect to the field parameters while the
//! prior draw and the noise stay frozen.

mod grid;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FlacError, Result};
use crate::nn::{Gradients, Params, Tape};

pub use grid::{export_field_grid, write_field_csv, FieldRow, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Midpoint,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Midpoint => "midpoint",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "euler" => Some(Scheme::Euler),
            "midpoint" => Some(Scheme::Midpoint),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Prior {
    /// Uniform on `[-1, 1]^d`.
    UniformBox,
    StandardGaussian,
}

impl Prior {
    pub fn tag(self) -> &'static str {
        match self {
            Prior::UniformBox => "uniform_box",
            Prior::StandardGaussian => "standard_gaussian",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "uniform_box" => Some(Prior::UniformBox),
            "standard_gaussian" => Some(Prior::StandardGaussian),
            _ => None,
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Prior::UniformBox => rng.random_range(-1.0..=1.0),
            Prior::StandardGaussian => rng.sample(StandardNormal),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Number of integration steps (NFE budget).
    pub n_steps: usize,
    pub scheme: Scheme,
    /// Diffusion scale; zero gives a deterministic flow given `X₀`.
    pub sigma: f64,
    pub prior: Prior,
    /// Half-width of the action box; `f64::INFINITY` disables clamping.
    pub action_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_steps: 2,
            scheme: Scheme::Midpoint,
            sigma: 0.0,
            prior: Prior::UniformBox,
            action_bound: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(FlacError::config("solver.n_steps", "must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(FlacError::config("solver.sigma", "must be finite and non-negative"));
        }
        if !(self.action_bound > 0.0) {
            return Err(FlacError::config("solver.action_bound", "must be positive"));
        }
        Ok(())
    }
}

/// One generated action with its full latent path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `X₀ … X_N`, unclamped.
    pub latents: Vec<Vec<f64>>,
    /// Drift evaluations that advanced the state, one per step.
    pub drifts: Vec<Vec<f64>>,
    /// Standard normal draws per step; empty when `σ = 0`.
    pub noise: Vec<Vec<f64>>,
    pub energy: f64,
    /// `X_N` clamped to the action box.
    pub action: Vec<f64>,
    pub dt: f64,
}

#[inline]
fn half_sq_norm<'a>(u: impl Iterator<Item = &'a f64>) -> f64 {
    0.5 * u.fold(0.0, |acc, v| acc + v * v)
}

/// `Δτ · Σ_k ½‖u_k‖²` over the stored drifts.
pub fn kinetic_energy_estimate(traj: &Trajectory) -> f64 {
    let mut acc = 0.0;
    for u in &traj.drifts {
        acc += half_sq_norm(u.iter());
    }
    acc * traj.dt
}

#[derive(Clone, Debug)]
enum StepTapes {
    Euler(Tape),
    Midpoint { start: Tape, mid: Tape },
}

/// A batch of generated actions.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// `N + 1` matrices of shape `batch × d_a`.
    pub latents: Vec<Array2<f64>>,
    /// `N` matrices of advancing drifts.
    pub drifts: Vec<Array2<f64>>,
    pub noise: Vec<Array2<f64>>,
    /// Per-row `Ê`.
    pub energy: Array1<f64>,
    pub actions: Array2<f64>,
    dt: f64,
    state_dim: usize,
    tapes: Option<Vec<StepTapes>>,
}

fn field_input(states: &Array2<f64>, tau: f64, x: &Array2<f64>) -> Array2<f64> {
    let (b, ds) = states.dim();
    let da = x.ncols();
    let mut input = Array2::zeros((b, ds + 1 + da));
    input.slice_mut(s![.., ..ds]).assign(states);
    input.column_mut(ds).fill(tau);
    input.slice_mut(s![.., ds + 1..]).assign(x);
    input
}

fn check_finite(u: &Array2<f64>, step: usize) -> Result<()> {
    match u.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(FlacError::fault(format!("drift at step {step}"), i)),
        None => Ok(()),
    }
}

/// Generates one action per row of `states`.
///
/// Random draws are taken in a fixed order: all prior coordinates first
/// (row-major), then the noise of each step.
pub fn generate<R: Rng + ?Sized>(
    actor: &Params,
    states: &Array2<f64>,
    cfg: &SolverConfig,
    rng: &mut R,
    record_tape: bool,
) -> Result<Rollout> {
    cfg.validate()?;
    let (batch, ds) = states.dim();
    let da = actor.output_dim();
    if actor.input_dim() != ds + 1 + da {
        return Err(FlacError::Shape {
            context: "actor input (state + time + latent)",
            expected: ds + 1 + da,
            actual: actor.input_dim(),
        });
    }
    let dt = cfg.dt();
    let noise_scale = cfg.sigma * dt.sqrt();

    let x0 = Array2::from_shape_simple_fn((batch, da), || cfg.prior.sample(rng));
    let mut latents = Vec::with_capacity(cfg.n_steps + 1);
    let mut drifts = Vec::with_capacity(cfg.n_steps);
    let mut noise = Vec::new();
    let mut tapes = record_tape.then(|| Vec::with_capacity(cfg.n_steps));
    let mut acc = Array1::<f64>::zeros(batch);
    latents.push(x0);

    let eval = |tau: f64, x: &Array2<f64>| -> Result<(Array2<f64>, Option<Tape>)> {
        let input = field_input(states, tau, x);
        if record_tape {
            let (u, tape) = actor.forward_tape(input)?;
            Ok((u, Some(tape)))
        } else {
            Ok((actor.forward_batch(&input)?, None))
        }
    };

    for k in 0..cfg.n_steps {
        let tau = k as f64 * dt;
        let x = &latents[k];
        let (u, step_tapes) = match cfg.scheme {
            Scheme::Euler => {
                let (u, tape) = eval(tau, x)?;
                check_finite(&u, k)?;
                (u, tape.map(StepTapes::Euler))
            }
            Scheme::Midpoint => {
                let (u0, start) = eval(tau, x)?;
                check_finite(&u0, k)?;
                let x_mid = x + &(&u0 * (0.5 * dt));
                let (um, mid) = eval(tau + 0.5 * dt, &x_mid)?;
                check_finite(&um, k)?;
                let tapes = match (start, mid) {
                    (Some(start), Some(mid)) => Some(StepTapes::Midpoint { start, mid }),
                    _ => None,
                };
                (um, tapes)
            }
        };
        let mut next = x + &(&u * dt);
        if cfg.sigma > 0.0 {
            let z: Array2<f64> =
                Array2::from_shape_simple_fn((batch, da), || rng.sample(StandardNormal));
            next.scaled_add(noise_scale, &z);
            noise.push(z);
        }
        for (a, row) in acc.iter_mut().zip(u.rows()) {
            *a += half_sq_norm(row.iter());
        }
        if let (Some(all), Some(t)) = (tapes.as_mut(), step_tapes) {
            all.push(t);
        }
        drifts.push(u);
        latents.push(next);
    }

    let bound = cfg.action_bound;
    let actions = latents[cfg.n_steps].mapv(|v| v.clamp(-bound, bound));
    Ok(Rollout {
        latents,
        drifts,
        noise,
        energy: acc * dt,
        actions,
        dt,
        state_dim: ds,
        tapes,
    })
}

impl Rollout {
    pub fn batch(&self) -> usize {
        self.actions.nrows()
    }

    pub fn mean_energy(&self) -> f64 {
        self.energy.mean().unwrap_or(0.0)
    }

    pub fn trajectory(&self, row: usize) -> Trajectory {
        let take = |m: &Array2<f64>| m.row(row).to_vec();
        Trajectory {
            latents: self.latents.iter().map(take).collect(),
            drifts: self.drifts.iter().map(take).collect(),
            noise: self.noise.iter().map(take).collect(),
            energy: self.energy[row],
            action: take(&self.actions),
            dt: self.dt,
        }
    }

    /// Pathwise gradient of `Σ_b terminal_cotangent_b · a_b + energy_weight_b · Ê_b`
    /// with respect to the field parameters. The clamp is treated as the identity.
    pub fn backprop(
        &self,
        actor: &Params,
        terminal_cotangent: &Array2<f64>,
        energy_weight: &Array1<f64>,
    ) -> Result<Gradients> {
        let tapes = self
            .tapes
            .as_ref()
            .ok_or_else(|| FlacError::NotApplicable("rollout was generated without tapes".into()))?;
        if terminal_cotangent.dim() != self.actions.dim() {
            return Err(FlacError::Shape {
                context: "terminal cotangent",
                expected: self.actions.len(),
                actual: terminal_cotangent.len(),
            });
        }
        if energy_weight.len() != self.batch() {
            return Err(FlacError::Shape {
                context: "energy weights",
                expected: self.batch(),
                actual: energy_weight.len(),
            });
        }
        let dt = self.dt;
        let x_cols = self.state_dim + 1..;
        let weight_col = energy_weight.view().insert_axis(Axis(1));
        let mut grads = Gradients::zeros_like(actor);
        let mut g = terminal_cotangent.to_owned();
        for (k, step) in tapes.iter().enumerate().rev() {
            // cotangent on the advancing drift: Δτ·g from the state update,
            // w·Δτ·u from the energy term.
            let g_u = &g * dt + &(&self.drifts[k] * &weight_col) * dt;
            match step {
                StepTapes::Euler(tape) => {
                    let gin = actor.backward_into(tape, &g_u, &mut grads)?;
                    g += &gin.slice(s![.., x_cols.clone()]);
                }
                StepTapes::Midpoint { start, mid } => {
                    let gin_mid = actor.backward_into(mid, &g_u, &mut grads)?;
                    let g_xmid = gin_mid.slice(s![.., x_cols.clone()]).to_owned();
                    let g_u0 = &g_xmid * (0.5 * dt);
                    let gin0 = actor.backward_into(start, &g_u0, &mut grads)?;
                    g += &g_xmid;
                    g += &gin0.slice(s![.., x_cols.clone()]);
                }
            }
        }
        Ok(grads)
    }
}

fn single_state(s: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, s.len()), s.to_vec()).expect("row vector shape")
}

/// Generates a single action from state `s` with its own seeded stream.
pub fn sample_action(
    actor: &Params,
    s: &[f64],
    cfg: &SolverConfig,
    rng_seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(generate(actor, &single_state(s), cfg, &mut rng, false)?.trajectory(0))
}

/// Monte Carlo estimate of the expected kinetic energy at state `s`.
pub fn expected_energy(
    actor: &Params,
    s: &[f64],
    cfg: &SolverConfig,
    n_samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(FlacError::config("n_samples", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let states = Array2::from_shape_fn((n_samples, s.len()), |(_, j)| s[j]);
    Ok(generate(actor, &states, cfg, &mut rng, false)?.mean_energy())
}

/// Gradient of `terminal_cotangent · a + energy_weight · Ê` for the single
/// action generated by [`sample_action`] with the same seed.
pub fn pathwise_grad(
    actor: &Params,
    s: &[f64],
    cfg: &SolverConfig,
    rng_seed: u64,
    terminal_cotangent: &[f64],
    energy_weight: f64,
) -> Result<Gradients> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let rollout = generate(actor, &single_state(s), cfg, &mut rng, true)?;
    let cot = Array2::from_shape_vec((1, terminal_cotangent.len()), terminal_cotangent.to_vec())
        .map_err(|_| FlacError::Shape {
            context: "terminal cotangent",
            expected: actor.output_dim(),
            actual: terminal_cotangent.len(),
        })?;
    rollout.backprop(actor, &cot, &Array1::from_elem(1, energy_weight))
}

/// Test helpers for building analytic fields out of network parameters.
pub mod fields {
    use ndarray::{Array1, Array2};

    use crate::nn::{Activation, Layer, Params};

    /// A single linear layer `u(s, τ, x) = W·[s, τ, x] + b`.
    pub fn linear(state_dim: usize, weight_on_x: &Array2<f64>, bias: &[f64]) -> Params {
        let da = bias.len();
        let mut weight = Array2::zeros((da, state_dim + 1 + da));
        weight
            .slice_mut(ndarray::s![.., state_dim + 1..])
            .assign(weight_on_x);
        Params::from_layers(
            vec![Layer {
                weight,
                bias: Array1::from(bias.to_vec()),
                activation: Activation::Identity,
            }],
            0,
        )
        .expect("single layer")
    }

    /// Constant field `u ≡ c`.
    pub fn constant(state_dim: usize, c: &[f64]) -> Params {
        linear(state_dim, &Array2::zeros((c.len(), c.len())), c)
    }

    /// `u = −x`.
    pub fn contracting(state_dim: usize, action_dim: usize) -> Params {
        linear(
            state_dim,
            &(-Array2::<f64>::eye(action_dim)),
            &vec![0.0; action_dim],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn cfg(n: usize, scheme: Scheme, sigma: f64, prior: Prior, bound: f64) -> SolverConfig {
        SolverConfig {
            n_steps: n,
            scheme,
            sigma,
            prior,
            action_bound: bound,
        }
    }

    #[test]
    fn defaults_are_two_step_midpoint() {
        let c = SolverConfig::default();
        assert_eq!(c.n_steps, 2);
        assert_eq!(c.scheme, Scheme::Midpoint);
        assert_eq!(c.sigma, 0.0);
        assert_eq!(c.dt() * c.n_steps as f64, 1.0);
    }

    #[test]
    fn zero_field_returns_clamped_prior_with_zero_energy() {
        let actor = fields::constant(1, &[0.0, 0.0]);
        let c = cfg(4, Scheme::Midpoint, 0.0, Prior::StandardGaussian, 0.5);
        let t = sample_action(&actor, &[0.3], &c, 9).unwrap();
        assert_eq!(t.energy, 0.0);
        let expected: Vec<f64> = t.latents[0].iter().map(|v| v.clamp(-0.5, 0.5)).collect();
        assert_eq!(t.action, expected);
        assert_eq!(t.latents[4], t.latents[0]);
    }

    #[test]
    fn constant_field_euler_and_midpoint() {
        let c_vec = [0.7, -1.2];
        let actor = fields::constant(0, &c_vec);
        for n in [1, 2, 5, 24] {
            for scheme in [Scheme::Euler, Scheme::Midpoint] {
                let c = cfg(n, scheme, 0.0, Prior::StandardGaussian, f64::INFINITY);
                let t = sample_action(&actor, &[], &c, 3).unwrap();
                for j in 0..2 {
                    assert!((t.latents[n][j] - (t.latents[0][j] + c_vec[j])).abs() < 1e-12);
                }
                assert!((t.energy - 0.5 * (0.49 + 1.44)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_matches_stored_drifts_bit_exactly() {
        let actor = Params::init(&[5, 16, 16, 2], Activation::Elu, 4).unwrap();
        for scheme in [Scheme::Euler, Scheme::Midpoint] {
            for sigma in [0.0, 0.7] {
                let c = cfg(3, scheme, sigma, Prior::UniformBox, 1.0);
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                let states = Array2::from_shape_fn((6, 2), |(i, j)| i as f64 - j as f64);
                let r = generate(&actor, &states, &c, &mut rng, false).unwrap();
                for i in 0..6 {
                    let t = r.trajectory(i);
                    assert_eq!(kinetic_energy_estimate(&t), t.energy);
                    assert_eq!(t.noise.len(), if sigma > 0.0 { 3 } else { 0 });
                    assert!(t.action.iter().all(|a| a.abs() <= 1.0));
                }
            }
        }
    }

    #[test]
    fn energy_estimate_arithmetic() {
        let t = Trajectory {
            latents: vec![],
            drifts: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            noise: vec![],
            energy: 0.0,
            action: vec![],
            dt: 0.5,
        };
        assert_eq!(kinetic_energy_estimate(&t), 1.25);
        // unit-speed straight line over the unit interval
        let unit = Trajectory {
            drifts: vec![vec![1.0]; 10],
            dt: 0.1,
            ..t.clone()
        };
        assert!((kinetic_energy_estimate(&unit) - 0.5).abs() < 1e-15);
        let zero = Trajectory {
            drifts: vec![vec![0.0, 0.0]; 3],
            ..t
        };
        assert_eq!(kinetic_energy_estimate(&zero), 0.0);
    }

    #[test]
    fn replay_is_deterministic() {
        let actor = Params::init(&[5, 8, 2], Activation::Elu, 4).unwrap();
        let c = cfg(2, Scheme::Midpoint, 0.3, Prior::UniformBox, 1.0);
        let a = sample_action(&actor, &[0.1, 0.2], &c, 77).unwrap();
        let b = sample_action(&actor, &[0.1, 0.2], &c, 77).unwrap();
        assert_eq!(a, b);
        let other = sample_action(&actor, &[0.1, 0.2], &c, 78).unwrap();
        assert_ne!(a.latents[0], other.latents[0]);
    }

    #[test]
    fn expected_energy_for_simple_fields() {
        let zero = fields::constant(0, &[0.0, 0.0]);
        let c = cfg(8, Scheme::Euler, 0.0, Prior::StandardGaussian, f64::INFINITY);
        assert_eq!(expected_energy(&zero, &[], &c, 17, 0).unwrap(), 0.0);
        let constant = fields::constant(0, &[1.0, 2.0]);
        assert!((expected_energy(&constant, &[], &c, 5, 0).unwrap() - 2.5).abs() < 1e-12);
        assert!(expected_energy(&constant, &[], &c, 0, 0).is_err());
    }

    #[test]
    fn contracting_field_energy_matches_gaussian_moment() {
        // dX = −X dτ, X₀ ~ N(0,1): X_τ = X₀e^{−τ}, so
        // E∫½X_τ²dτ = ½·(1 − e^{−2})/2 per dimension. The Euler scheme with
        // N steps gives the Riemann sum ½Δτ Σ (1−Δτ)^{2k} exactly in
        // expectation; at N = 64 the two agree to ~4e-3.
        let actor = fields::contracting(0, 1);
        let c = cfg(64, Scheme::Euler, 0.0, Prior::StandardGaussian, f64::INFINITY);
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = generate(&actor, &Array2::zeros((n, 0)), &c, &mut rng, false).unwrap();
        let mean = r.mean_energy();
        let sd = r.energy.std(1.0);
        let exact = 0.25 * (1.0 - (-2.0f64).exp());
        let dt: f64 = 1.0 / 64.0;
        let riemann: f64 = (0..64).map(|k| 0.5 * dt * (1.0 - dt).powi(2 * k)).sum();
        assert!((riemann - exact).abs() < 5e-3);
        let se = sd / (n as f64).sqrt();
        assert!((mean - riemann).abs() < 3.0 * se, "mean {mean} riemann {riemann} se {se}");
        assert!((mean - exact).abs() < 3.0 * se + (riemann - exact).abs());
    }

    #[test]
    fn schemes_converge_together() {
        let actor = Params::init(&[3, 16, 2], Activation::Elu, 12).unwrap();
        let diff = |n: usize| {
            let e = sample_action(&actor, &[], &cfg(n, Scheme::Euler, 0.0, Prior::StandardGaussian, f64::INFINITY), 1).unwrap();
            let m = sample_action(&actor, &[], &cfg(n, Scheme::Midpoint, 0.0, Prior::StandardGaussian, f64::INFINITY), 1).unwrap();
            e.latents[n]
                .iter()
                .zip(&m.latents[n])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let coarse = diff(4);
        let fine = diff(256);
        assert!(fine < coarse / 20.0, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn shape_and_fault_errors() {
        let actor = Params::init(&[4, 8, 2], Activation::Elu, 1).unwrap();
        let c = SolverConfig::default();
        assert!(matches!(
            sample_action(&actor, &[0.0, 0.0], &c, 0),
            Err(FlacError::Shape { .. })
        ));
        let nan = fields::constant(1, &[f64::NAN, 0.0]);
        match sample_action(&nan, &[0.0], &c, 0) {
            Err(FlacError::NumericalFault { context, .. }) => assert!(context.contains("step 0")),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SolverConfig {
            n_steps: 0,
            ..SolverConfig::default()
        };
        assert!(sample_action(&fields::constant(1, &[0.0, 0.0]), &[0.0], &bad, 0).is_err());
    }

    #[test]
    fn zero_objective_gives_zero_gradient() {
        let actor = Params::init(&[4, 8, 2], Activation::Elu, 1).unwrap();
        let g = pathwise_grad(&actor, &[0.5], &SolverConfig::default(), 3, &[0.0, 0.0], 0.0).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn energy_gradient_of_constant_field_bias() {
        // u ≡ b gives Ê = ½‖b‖², so ∂Ê/∂b = b for every N and scheme.
        let b = [0.4, -0.9];
        let actor = fields::constant(1, &b);
        for scheme in [Scheme::Euler, Scheme::Midpoint] {
            let c = cfg(3, scheme, 0.0, Prior::UniformBox, 1.0);
            let g = pathwise_grad(&actor, &[0.2], &c, 5, &[0.0, 0.0], 1.0).unwrap();
            for j in 0..2 {
                assert!((g.layers[0].bias[j] - b[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn untaped_rollout_cannot_backprop() {
        let actor = fields::constant(0, &[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = generate(&actor, &Array2::zeros((2, 0)), &SolverConfig::default(), &mut rng, false)
            .unwrap();
        assert!(r
            .backprop(&actor, &Array2::zeros((2, 1)), &Array1::zeros(2))
            .is_err());
    }
}
