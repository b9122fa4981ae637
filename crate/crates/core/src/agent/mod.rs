//! The actor-critic learner.
//!
//! Critics regress onto the energy-regularized target
//! `y = r + γ(min_i Q̄_i(s', a') − α·Ê(s'))`, the actor minimizes
//! `α·Ê(s) − Q₁(s, a)` through the generation path, and the multiplier is
//! tuned by `log α ← log α − β·(E_tgt − Ê)`.

mod buffer;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlacError, Result};
use crate::flow::{generate, Rollout, SolverConfig};
use crate::nn::{checkpoint, Activation, AdamState, Params};
use crate::seed;

pub use buffer::{Batch, ReplayBuffer, Transition, DEFAULT_CAPACITY};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    /// Dual-tuned multiplier starting at `exp(init_log_alpha)`.
    Auto { init_log_alpha: f64 },
    /// Constant multiplier; `Fixed(0.0)` disables the energy term.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Step size of the log-multiplier update.
    pub alpha_lr: f64,
    pub gamma: f64,
    /// Energy budget per action dimension.
    pub energy_coeff: f64,
    pub warmup_steps: usize,
    /// Half-width of the uniform warmup action box for unbounded action spaces.
    pub warmup_range: f64,
    pub polyak: f64,
    pub updates_per_step: usize,
    pub grad_clip: f64,
    pub alpha: AlphaMode,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            batch_size: 256,
            buffer_capacity: DEFAULT_CAPACITY,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            gamma: 0.99,
            energy_coeff: 0.5,
            warmup_steps: 5000,
            warmup_range: 1.0,
            polyak: crate::nn::DEFAULT_POLYAK,
            updates_per_step: 1,
            grad_clip: 10.0,
            alpha: AlphaMode::Auto { init_log_alpha: 0.0 },
            actor_hidden: vec![512, 512],
            critic_hidden: vec![512, 512, 512],
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(FlacError::config(key, format!("must be positive, got {v}")))
            }
        };
        if self.batch_size == 0 {
            return Err(FlacError::config("agent.batch", "must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(FlacError::config("agent.buffer_capacity", "must be positive"));
        }
        positive("agent.actor_lr", self.actor_lr)?;
        positive("agent.critic_lr", self.critic_lr)?;
        positive("agent.alpha_lr", self.alpha_lr)?;
        positive("agent.grad_clip", self.grad_clip)?;
        positive("agent.warmup_range", self.warmup_range)?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(FlacError::config(
                "agent.gamma",
                format!("must lie in [0, 1), got {}", self.gamma),
            ));
        }
        if !(self.energy_coeff >= 0.0) || !self.energy_coeff.is_finite() {
            return Err(FlacError::config("agent.energy_coeff", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return Err(FlacError::config("agent.polyak", "must lie in [0, 1]"));
        }
        if self.updates_per_step == 0 {
            return Err(FlacError::config("agent.updates_per_step", "must be positive"));
        }
        match self.alpha {
            AlphaMode::Fixed(a) if !(a >= 0.0) || !a.is_finite() => {
                return Err(FlacError::config("agent.alpha", "fixed alpha must be non-negative"))
            }
            AlphaMode::Auto { init_log_alpha } if !init_log_alpha.is_finite() => {
                return Err(FlacError::config("agent.init_log_alpha", "must be finite"))
            }
            _ => {}
        }
        if self.actor_hidden.is_empty() || self.actor_hidden.contains(&0) {
            return Err(FlacError::config("net.actor_hidden", "need positive widths"));
        }
        if self.critic_hidden.is_empty() || self.critic_hidden.contains(&0) {
            return Err(FlacError::config("net.critic_hidden", "need positive widths"));
        }
        Ok(())
    }
}

/// Energy budget `E_tgt = coeff · action_dim`.
pub fn target_energy(action_dim: usize, coeff: f64) -> Result<f64> {
    if action_dim == 0 {
        return Err(FlacError::config("action_dim", "must be at least 1"));
    }
    if !(coeff >= 0.0) {
        return Err(FlacError::config(
            "agent.energy_coeff",
            format!("must be non-negative, got {coeff}"),
        ));
    }
    Ok(coeff * action_dim as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub log_alpha: f64,
    pub mean_energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainStatus {
    Collecting,
    Updated(StepMetrics),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorStep {
    /// Batch mean of `α·Ê − Q₁`, before the update.
    pub loss: f64,
    /// Batch mean of `Ê`, detached.
    pub mean_energy: f64,
}

/// Learner state: actor, twin critics with their targets, and the multiplier.
#[derive(Clone, Debug)]
pub struct Agent {
    pub actor: Params,
    actor_opt: AdamState,
    pub critics: [Params; 2],
    critic_opts: [AdamState; 2],
    pub targets: [Params; 2],
    log_alpha: f64,
    e_tgt: f64,
    pub config: AgentConfig,
    pub solver: SolverConfig,
    state_dim: usize,
    action_dim: usize,
    rng: ChaCha8Rng,
}

fn concat_cols(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("matching row counts")
}

fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

impl Agent {
    pub fn new(
        config: AgentConfig,
        solver: SolverConfig,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        config.validate()?;
        solver.validate()?;
        let mut actor_sizes = vec![state_dim + 1 + action_dim];
        actor_sizes.extend(&config.actor_hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend(&config.critic_hidden);
        critic_sizes.push(1);

        let actor = Params::init(&actor_sizes, Activation::Elu, seed::derive(config.seed, seed::ACTOR))?;
        let critics = [
            Params::init(&critic_sizes, Activation::Gelu, seed::derive(config.seed, seed::CRITIC_1))?,
            Params::init(&critic_sizes, Activation::Gelu, seed::derive(config.seed, seed::CRITIC_2))?,
        ];
        let log_alpha = match config.alpha {
            AlphaMode::Auto { init_log_alpha } => init_log_alpha,
            AlphaMode::Fixed(a) => a.ln(),
        };
        Ok(Agent {
            actor_opt: AdamState::new(&actor),
            critic_opts: [AdamState::new(&critics[0]), AdamState::new(&critics[1])],
            targets: critics.clone(),
            critics,
            actor,
            log_alpha,
            e_tgt: target_energy(action_dim, config.energy_coeff)?,
            rng: ChaCha8Rng::seed_from_u64(seed::derive(config.seed, seed::LEARNER)),
            config,
            solver,
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn auto_tune(&self) -> bool {
        matches!(self.config.alpha, AlphaMode::Auto { .. })
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn set_log_alpha(&mut self, log_alpha: f64) {
        self.log_alpha = log_alpha;
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_energy(&self) -> f64 {
        self.e_tgt
    }

    /// Bootstrap targets; terminal rows get `y = r`.
    pub fn critic_target<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Array1<f64>> {
        let mut y = batch.rewards.clone();
        let gamma = self.config.gamma;
        if gamma == 0.0 {
            return Ok(y);
        }
        let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch.dones[i]).collect();
        if live.is_empty() {
            return Ok(y);
        }
        let next = select_rows(&batch.next_states, &live);
        let rollout = generate(&self.actor, &next, &self.solver, rng, false)?;
        let input = concat_cols(&next, &rollout.actions);
        let q1 = self.targets[0].forward_batch(&input)?;
        let q2 = self.targets[1].forward_batch(&input)?;
        let alpha = self.alpha();
        for (k, &i) in live.iter().enumerate() {
            let (a, b) = (q1[[k, 0]], q2[[k, 0]]);
            if !a.is_finite() || !b.is_finite() {
                return Err(FlacError::fault("target critic", i));
            }
            let q_min = a.min(b);
            y[i] = batch.rewards[i] + gamma * (q_min - alpha * rollout.energy[k]);
        }
        Ok(y)
    }

    /// One Adam step per critic toward `y`; returns the pre-step loss, the
    /// mean over both critics of the mean squared residual.
    pub fn critic_update(&mut self, batch: &Batch, y: &Array1<f64>) -> Result<f64> {
        if batch.is_empty() {
            return Err(FlacError::config("batch", "empty batch"));
        }
        let n = batch.len() as f64;
        let input = concat_cols(&batch.states, &batch.actions);
        let mut total = 0.0;
        for i in 0..2 {
            let (q, tape) = self.critics[i].forward_tape(input.clone())?;
            let residual = &q.column(0) - y;
            total += residual.mapv(|r| r * r).sum() / n;
            let cot = residual.mapv(|r| 2.0 * r / n).insert_axis(Axis(1));
            let mut grads = self.critics[i].backward(&tape, &cot)?.params;
            grads.clip_global_norm(self.config.grad_clip);
            self.critic_opts[i].step(&mut self.critics[i], &grads, self.config.critic_lr)?;
        }
        Ok(total / 2.0)
    }

    /// One pathwise Adam step on the actor with both critics frozen.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<ActorStep> {
        if batch.is_empty() {
            return Err(FlacError::config("batch", "empty batch"));
        }
        let n = batch.len() as f64;
        let alpha = self.alpha();
        let rollout = generate(&self.actor, &batch.states, &self.solver, rng, true)?;
        let (q, tape) = self.critics[0].forward_tape(concat_cols(&batch.states, &rollout.actions))?;
        let loss = (alpha * rollout.energy.sum() - q.sum()) / n;
        let dq = Array2::from_elem((batch.len(), 1), -1.0 / n);
        let g_in = self.critics[0].backward(&tape, &dq)?.input;
        let g_action = g_in.slice(s![.., self.state_dim..]).to_owned();
        let weights = Array1::from_elem(batch.len(), alpha / n);
        let mut grads = rollout.backprop(&self.actor, &g_action, &weights)?;
        grads.clip_global_norm(self.config.grad_clip);
        self.actor_opt.step(&mut self.actor, &grads, self.config.actor_lr)?;
        Ok(ActorStep {
            loss,
            mean_energy: rollout.mean_energy(),
        })
    }

    /// Dual step on `log α` given the detached batch-mean energy. A no-op
    /// for a fixed multiplier.
    pub fn alpha_update(&mut self, mean_energy: f64) -> f64 {
        if self.auto_tune() {
            self.log_alpha -= self.config.alpha_lr * (self.e_tgt - mean_energy);
        }
        self.log_alpha
    }

    /// Replaces the actor and resets its optimizer state.
    pub fn set_actor(&mut self, actor: Params) {
        self.actor_opt = AdamState::new(&actor);
        self.actor = actor;
    }

    pub fn update_targets(&mut self) -> Result<()> {
        for i in 0..2 {
            self.targets[i].polyak_update(&self.critics[i], self.config.polyak)?;
        }
        Ok(())
    }

    /// Critic, actor, multiplier and target updates on fresh minibatches.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<TrainStatus> {
        let ready = buffer.total_pushed() >= self.config.warmup_steps as u64
            && buffer.len() >= self.config.batch_size;
        if !ready {
            return Ok(TrainStatus::Collecting);
        }
        let mut rng = self.rng.clone();
        let mut last = None;
        for _ in 0..self.config.updates_per_step {
            let batch = buffer.sample(self.config.batch_size, &mut rng)?;
            let y = self.critic_target(&batch, &mut rng)?;
            let critic_loss = self.critic_update(&batch, &y)?;
            let actor = self.actor_update(&batch, &mut rng)?;
            self.alpha_update(actor.mean_energy);
            self.update_targets()?;
            last = Some(StepMetrics {
                critic_loss,
                actor_loss: actor.loss,
                alpha: self.alpha(),
                log_alpha: self.log_alpha,
                mean_energy: actor.mean_energy,
            });
        }
        self.rng = rng;
        Ok(TrainStatus::Updated(last.expect("at least one update")))
    }

    /// Generates one action per row of `states`.
    pub fn act_batch<R: Rng + ?Sized>(&self, states: &Array2<f64>, rng: &mut R) -> Result<Rollout> {
        generate(&self.actor, states, &self.solver, rng, false)
    }

    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let states = Array2::from_shape_vec((1, s.len()), s.to_vec()).map_err(|_| FlacError::Shape {
            context: "state",
            expected: self.state_dim,
            actual: s.len(),
        })?;
        Ok(self.act_batch(&states, rng)?.actions.row(0).to_vec())
    }

    /// Uniform random action used before learning starts.
    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let half = if self.solver.action_bound.is_finite() {
            self.solver.action_bound
        } else {
            self.config.warmup_range
        };
        (0..self.action_dim).map(|_| rng.random_range(-half..=half)).collect()
    }

    /// Text bundle of every network plus the multiplier state.
    pub fn checkpoint(&self, config_hash: &str) -> String {
        let mut out = format!(
            "flac-agent 1\nconfig_hash {config_hash}\nlog_alpha {}\ne_tgt {}\n",
            self.log_alpha, self.e_tgt
        );
        let nets = [
            ("actor", &self.actor),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("target1", &self.targets[0]),
            ("target2", &self.targets[1]),
        ];
        for (name, p) in nets {
            out.push_str(&format!("network {name}\n"));
            out.push_str(&checkpoint::encode(p));
        }
        out
    }

    /// Restores network parameters and the multiplier from [`Agent::checkpoint`]
    /// output. Returns the stored config hash.
    pub fn restore(&mut self, text: &str) -> Result<String> {
        let bad = |m: &str| FlacError::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("flac-agent 1") {
            return Err(bad("missing agent header"));
        }
        let mut field = |name: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(name))
        };
        let hash = field("config_hash")?;
        let log_alpha: f64 = field("log_alpha")?.parse().map_err(|_| bad("log_alpha"))?;
        let e_tgt: f64 = field("e_tgt")?.parse().map_err(|_| bad("e_tgt"))?;
        let mut nets = Vec::with_capacity(5);
        for name in ["actor", "critic1", "critic2", "target1", "target2"] {
            if lines.next() != Some(&format!("network {name}")[..]) {
                return Err(bad(name));
            }
            nets.push(checkpoint::decode_lines(&mut lines)?);
        }
        let shapes_ok = nets[0].layer_sizes() == self.actor.layer_sizes()
            && nets[1..].iter().all(|p| p.layer_sizes() == self.critics[0].layer_sizes());
        if !shapes_ok {
            return Err(bad("network shapes do not match the agent"));
        }
        let mut it = nets.into_iter();
        self.actor = it.next().unwrap();
        self.critics = [it.next().unwrap(), it.next().unwrap()];
        self.targets = [it.next().unwrap(), it.next().unwrap()];
        self.actor_opt = AdamState::new(&self.actor);
        self.critic_opts = [AdamState::new(&self.critics[0]), AdamState::new(&self.critics[1])];
        self.log_alpha = log_alpha;
        self.e_tgt = e_tgt;
        Ok(hash)
    }
}
