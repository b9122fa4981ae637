//! The collect/learn loop shared by every training subcommand.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, AgentConfig, ReplayBuffer, StepMetrics, TrainStatus, Transition};
use crate::env::{make_env, Environment};
use crate::error::Result;
use crate::flow::SolverConfig;
use crate::seed;

/// One learner update, as recorded in the energy/multiplier trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    /// Environment steps taken when the update ran.
    pub step: usize,
    pub metrics: StepMetrics,
}

/// Environment interaction plus one learner update per step.
pub struct Trainer {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    env: Box<dyn Environment>,
    explore_rng: ChaCha8Rng,
    state: Vec<f64>,
    episode: u64,
    episode_return: f64,
    /// Returns of finished training episodes.
    pub train_returns: Vec<f64>,
    pub steps: usize,
    pub trace: Vec<TraceRow>,
    /// `log α` before the first update.
    pub initial_log_alpha: f64,
    env_seed: u64,
}

impl Trainer {
    pub fn new(env_name: &str, agent_cfg: AgentConfig, solver: SolverConfig) -> Result<Self> {
        let mut env = make_env(env_name)?;
        let spec = env.spec().clone();
        let solver = SolverConfig {
            action_bound: solver.action_bound.min(spec.action_bound),
            ..solver
        };
        let buffer = ReplayBuffer::new(agent_cfg.buffer_capacity);
        let run_seed = agent_cfg.seed;
        let agent = Agent::new(agent_cfg, solver, spec.state_dim, spec.action_dim)?;
        let env_seed = seed::derive(run_seed, seed::ENV);
        let state = env.reset(env_seed);
        Ok(Trainer {
            initial_log_alpha: agent.log_alpha(),
            agent,
            buffer,
            env,
            explore_rng: ChaCha8Rng::seed_from_u64(seed::derive(run_seed, seed::EXPLORE)),
            state,
            episode: 0,
            episode_return: 0.0,
            train_returns: Vec::new(),
            steps: 0,
            trace: Vec::new(),
            env_seed,
        })
    }

    /// Takes one environment step (random during warmup), stores it, and
    /// runs the learner.
    pub fn step(&mut self) -> Result<Option<StepMetrics>> {
        let action = if self.steps < self.agent.config.warmup_steps {
            self.agent.random_action(&mut self.explore_rng)
        } else {
            self.agent.act(&self.state, &mut self.explore_rng)?
        };
        let result = self.env.step(&action);
        self.buffer.push(Transition {
            state: self.state.clone(),
            action,
            reward: result.reward,
            next_state: result.next_state.clone(),
            done: result.done && !result.truncated,
        })?;
        self.episode_return += result.reward;
        if result.done {
            self.train_returns.push(self.episode_return);
            self.episode_return = 0.0;
            self.episode += 1;
            self.state = self.env.reset(self.env_seed.wrapping_add(self.episode));
        } else {
            self.state = result.next_state;
        }
        self.steps += 1;
        match self.agent.train_step(&self.buffer)? {
            TrainStatus::Collecting => Ok(None),
            TrainStatus::Updated(m) => {
                self.trace.push(TraceRow { step: self.steps, metrics: m });
                Ok(Some(m))
            }
        }
    }
}

/// Mean undiscounted return over `episodes` evaluation episodes. Episode
/// `i` uses its own reset seed and sampling stream, both disjoint from the
/// training streams.
pub fn evaluate_returns(agent: &Agent, env_name: &str, episodes: usize, run_seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Ok(f64::NAN);
    }
    let base = seed::derive(run_seed, seed::EVAL);
    let mut total = 0.0;
    for i in 0..episodes as u64 {
        let mut env = make_env(env_name)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(base, i));
        let mut state = env.reset(seed::derive(base, i + (1 << 32)));
        loop {
            let action = agent.act(&state, &mut rng)?;
            let r = env.step(&action);
            total += r.reward;
            if r.done {
                break;
            }
            state = r.next_state;
        }
    }
    Ok(total / episodes as f64)
}

/// Actions and energies sampled from a stateless (bandit) policy.
pub fn sample_bandit_actions(agent: &Agent, n: usize, rng_seed: u64) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let rollout = agent.act_batch(&Array2::zeros((n, 0)), &mut rng)?;
    Ok((rollout.actions, rollout.energy.to_vec()))
}
