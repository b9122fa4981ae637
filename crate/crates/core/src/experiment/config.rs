//! Run configuration: a flat `key = value` text format with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! run.env = pointmass
//! agent.batch = 64
//! net.actor_hidden = 64,64
//! solver.action_bound = inf
//! ```
//!
//! Values are layered: built-in defaults, then the environment preset, then
//! the file, then command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::agent::{AgentConfig, AlphaMode};
use crate::env::ENV_NAMES;
use crate::error::{FlacError, Result};
use crate::flow::{Prior, Scheme, SolverConfig};

/// The subcommand a configuration is resolved for; it picks the default
/// environment when the file does not name one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Toy,
    Train,
    Ablate,
    Check,
    ExportField,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Toy => "toy",
            Mode::Train => "train",
            Mode::Ablate => "ablate",
            Mode::Check => "check",
            Mode::ExportField => "export-field",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [Mode::Toy, Mode::Train, Mode::Ablate, Mode::Check, Mode::ExportField]
            .into_iter()
            .find(|m| m.tag() == tag)
    }

    fn default_env(self) -> &'static str {
        match self {
            Mode::Toy => "multigoal",
            _ => "pointmass",
        }
    }
}

/// Settings for the `export-field` subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldExport {
    /// Agent checkpoint to read the actor from; a freshly initialized actor
    /// is used when absent.
    pub checkpoint: Option<PathBuf>,
    pub tau: f64,
    pub state: Vec<f64>,
    pub grid_min: f64,
    pub grid_max: f64,
    pub resolution: usize,
}

impl Default for FieldExport {
    fn default() -> Self {
        FieldExport {
            checkpoint: None,
            tau: 0.0,
            state: Vec::new(),
            grid_min: -6.0,
            grid_max: 6.0,
            resolution: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub env: String,
    pub agent: AgentConfig,
    pub solver: SolverConfig,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Toy runs: steps between field/action-cloud snapshots.
    pub snapshot_interval: usize,
    /// Toy runs: actions drawn per coverage evaluation.
    pub eval_samples: usize,
    /// Toy runs: also train the unregularized (α = 0) baseline.
    pub naive_baseline: bool,
    /// Energy coefficients swept by the ablation.
    pub ablation_grid: Vec<f64>,
    pub out_dir: PathBuf,
    pub write_svg: bool,
    pub write_checkpoint: bool,
    pub field: FieldExport,
    /// Self-test of the failure path: flips the sign of the quadratic term
    /// in the Girsanov estimator so that check must fail.
    pub check_wrong_sign: bool,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.agent.seed
    }

    /// Built-in defaults followed by the preset of `env`.
    pub fn preset(mode: Mode, env: &str) -> Result<Self> {
        let mut cfg = RunConfig {
            mode,
            env: env.to_string(),
            agent: AgentConfig::default(),
            solver: SolverConfig::default(),
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            snapshot_interval: 5_000,
            eval_samples: 1_000,
            naive_baseline: true,
            ablation_grid: vec![0.0, 0.1, 0.5, 2.5],
            out_dir: PathBuf::from("runs"),
            write_svg: true,
            write_checkpoint: true,
            field: FieldExport::default(),
            check_wrong_sign: false,
        };
        match env {
            "pointmass" => {}
            "multigoal" => {
                cfg.solver = SolverConfig {
                    n_steps: 24,
                    scheme: Scheme::Euler,
                    sigma: 0.0,
                    prior: Prior::StandardGaussian,
                    action_bound: f64::INFINITY,
                };
                // desk-scale learner: the bandit needs far smaller networks
                // and faster step sizes than the benchmark defaults
                cfg.agent.actor_hidden = vec![64, 64];
                cfg.agent.critic_hidden = vec![64, 64, 64];
                cfg.agent.batch_size = 64;
                cfg.agent.actor_lr = 1e-3;
                cfg.agent.critic_lr = 1e-3;
                cfg.agent.alpha_lr = 1e-2;
                cfg.agent.buffer_capacity = 100_000;
                cfg.agent.warmup_range = 6.0;
                cfg.total_steps = 30_000;
                cfg.eval_interval = 5_000;
            }
            other => {
                return Err(FlacError::config(
                    "run.env",
                    format!("unknown environment `{other}` (known: {})", ENV_NAMES.join(", ")),
                ))
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.solver.validate()?;
        if self.eval_interval == 0 {
            return Err(FlacError::config("run.eval_interval", "must be positive"));
        }
        if self.snapshot_interval == 0 {
            return Err(FlacError::config("run.snapshot_interval", "must be positive"));
        }
        if self.eval_samples == 0 {
            return Err(FlacError::config("run.eval_samples", "must be positive"));
        }
        if self.ablation_grid.iter().any(|c| !(*c >= 0.0)) {
            return Err(FlacError::config("ablation.grid", "coefficients must be non-negative"));
        }
        if !(self.field.grid_max > self.field.grid_min) {
            return Err(FlacError::config("field.grid_max", "must exceed field.grid_min"));
        }
        if self.field.resolution < 2 {
            return Err(FlacError::config("field.resolution", "must be at least 2"));
        }
        Ok(())
    }

    /// The fully resolved configuration as config text; every key is
    /// written explicitly so the file reloads to an equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let a = &self.agent;
        let s = &self.solver;
        let f = &self.field;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let flist = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let (alpha, init_log_alpha) = match a.alpha {
            AlphaMode::Auto { init_log_alpha } => ("auto".to_string(), init_log_alpha),
            AlphaMode::Fixed(v) => (v.to_string(), 0.0),
        };
        vec![
            ("run.env", self.env.clone()),
            ("run.seed", a.seed.to_string()),
            ("run.steps", self.total_steps.to_string()),
            ("run.eval_interval", self.eval_interval.to_string()),
            ("run.eval_episodes", self.eval_episodes.to_string()),
            ("run.snapshot_interval", self.snapshot_interval.to_string()),
            ("run.eval_samples", self.eval_samples.to_string()),
            ("run.naive_baseline", self.naive_baseline.to_string()),
            ("run.out_dir", self.out_dir.display().to_string()),
            ("run.svg", self.write_svg.to_string()),
            ("run.checkpoint", self.write_checkpoint.to_string()),
            ("agent.batch", a.batch_size.to_string()),
            ("agent.buffer_capacity", a.buffer_capacity.to_string()),
            ("agent.actor_lr", a.actor_lr.to_string()),
            ("agent.critic_lr", a.critic_lr.to_string()),
            ("agent.alpha_lr", a.alpha_lr.to_string()),
            ("agent.gamma", a.gamma.to_string()),
            ("agent.energy_coeff", a.energy_coeff.to_string()),
            ("agent.warmup", a.warmup_steps.to_string()),
            ("agent.warmup_range", a.warmup_range.to_string()),
            ("agent.polyak", a.polyak.to_string()),
            ("agent.updates_per_step", a.updates_per_step.to_string()),
            ("agent.grad_clip", a.grad_clip.to_string()),
            ("agent.alpha", alpha),
            ("agent.init_log_alpha", init_log_alpha.to_string()),
            ("net.actor_hidden", list(&a.actor_hidden)),
            ("net.critic_hidden", list(&a.critic_hidden)),
            ("solver.n_steps", s.n_steps.to_string()),
            ("solver.scheme", s.scheme.tag().to_string()),
            ("solver.sigma", s.sigma.to_string()),
            ("solver.prior", s.prior.tag().to_string()),
            ("solver.action_bound", s.action_bound.to_string()),
            ("ablation.grid", flist(&self.ablation_grid)),
            (
                "field.checkpoint",
                f.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("field.tau", f.tau.to_string()),
            ("field.state", flist(&f.state)),
            ("field.grid_min", f.grid_min.to_string()),
            ("field.grid_max", f.grid_max.to_string()),
            ("field.resolution", f.resolution.to_string()),
            ("check.wrong_sign_girsanov", self.check_wrong_sign.to_string()),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "run.env" => {} // consumed when the preset is chosen
            "run.seed" => self.agent.seed = parse(key, v)?,
            "run.steps" => self.total_steps = parse(key, v)?,
            "run.eval_interval" => self.eval_interval = parse(key, v)?,
            "run.eval_episodes" => self.eval_episodes = parse(key, v)?,
            "run.snapshot_interval" => self.snapshot_interval = parse(key, v)?,
            "run.eval_samples" => self.eval_samples = parse(key, v)?,
            "run.naive_baseline" => self.naive_baseline = parse(key, v)?,
            "run.out_dir" => self.out_dir = PathBuf::from(v),
            "run.svg" => self.write_svg = parse(key, v)?,
            "run.checkpoint" => self.write_checkpoint = parse(key, v)?,
            "agent.batch" => self.agent.batch_size = parse(key, v)?,
            "agent.buffer_capacity" => self.agent.buffer_capacity = parse(key, v)?,
            "agent.actor_lr" => self.agent.actor_lr = parse(key, v)?,
            "agent.critic_lr" => self.agent.critic_lr = parse(key, v)?,
            "agent.alpha_lr" => self.agent.alpha_lr = parse(key, v)?,
            "agent.gamma" => self.agent.gamma = parse(key, v)?,
            "agent.energy_coeff" => self.agent.energy_coeff = parse(key, v)?,
            "agent.warmup" => self.agent.warmup_steps = parse(key, v)?,
            "agent.warmup_range" => self.agent.warmup_range = parse(key, v)?,
            "agent.polyak" => self.agent.polyak = parse(key, v)?,
            "agent.updates_per_step" => self.agent.updates_per_step = parse(key, v)?,
            "agent.grad_clip" => self.agent.grad_clip = parse(key, v)?,
            "agent.alpha" => {
                self.agent.alpha = if v == "auto" {
                    let init = match self.agent.alpha {
                        AlphaMode::Auto { init_log_alpha } => init_log_alpha,
                        AlphaMode::Fixed(_) => 0.0,
                    };
                    AlphaMode::Auto { init_log_alpha: init }
                } else {
                    AlphaMode::Fixed(parse(key, v)?)
                }
            }
            "agent.init_log_alpha" => {
                let init: f64 = parse(key, v)?;
                if let AlphaMode::Auto { init_log_alpha } = &mut self.agent.alpha {
                    *init_log_alpha = init;
                }
            }
            "net.actor_hidden" => self.agent.actor_hidden = parse_list(key, v)?,
            "net.critic_hidden" => self.agent.critic_hidden = parse_list(key, v)?,
            "solver.n_steps" => self.solver.n_steps = parse(key, v)?,
            "solver.scheme" => {
                self.solver.scheme = Scheme::from_tag(v)
                    .ok_or_else(|| FlacError::config(key, format!("expected euler or midpoint, got `{v}`")))?
            }
            "solver.sigma" => self.solver.sigma = parse(key, v)?,
            "solver.prior" => {
                self.solver.prior = Prior::from_tag(v).ok_or_else(|| {
                    FlacError::config(key, format!("expected uniform_box or standard_gaussian, got `{v}`"))
                })?
            }
            "solver.action_bound" => self.solver.action_bound = parse(key, v)?,
            "ablation.grid" => self.ablation_grid = parse_list(key, v)?,
            "field.checkpoint" => self.field.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "field.tau" => self.field.tau = parse(key, v)?,
            "field.state" => self.field.state = parse_list(key, v)?,
            "field.grid_min" => self.field.grid_min = parse(key, v)?,
            "field.grid_max" => self.field.grid_max = parse(key, v)?,
            "field.resolution" => self.field.resolution = parse(key, v)?,
            "check.wrong_sign_girsanov" => self.check_wrong_sign = parse(key, v)?,
            other => return Err(FlacError::config(other, "unknown key")),
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| FlacError::config(key, format!("cannot parse `{value}` as {}", std::any::type_name::<T>())))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|x| parse(key, x.trim())).collect()
}

/// Splits config text into ordered `(key, value)` pairs.
fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            FlacError::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolves a configuration from file text and `key=value` overrides.
pub fn parse_config(text: &str, overrides: &[String], mode: Mode) -> Result<RunConfig> {
    let mut pairs = parse_lines(text)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| FlacError::config(o.clone(), "override must look like key=value"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut seen = BTreeMap::new();
    for (k, v) in &pairs {
        seen.insert(k.clone(), v.clone());
    }
    let env = seen.get("run.env").map(String::as_str).unwrap_or(mode.default_env());
    let mut cfg = RunConfig::preset(mode, env)?;
    // `agent.alpha` before `agent.init_log_alpha` so the latter always lands.
    let mut ordered: Vec<&(String, String)> = pairs.iter().collect();
    ordered.sort_by_key(|(k, _)| k == "agent.init_log_alpha");
    for (k, v) in ordered {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and resolves a configuration file. A missing path means an empty
/// file.
pub fn load_config(path: Option<&Path>, overrides: &[String], mode: Mode) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| FlacError::config("--config", format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("", &[], Mode::Train).unwrap();
        assert_eq!(c.env, "pointmass");
        assert_eq!(c.agent.batch_size, 256);
        assert_eq!(c.agent.gamma, 0.99);
        assert_eq!(c.solver.n_steps, 2);
        assert_eq!(c.solver.scheme, Scheme::Midpoint);
        assert_eq!(c.agent.energy_coeff, 0.5);
        assert_eq!(c.agent.actor_hidden, vec![512, 512]);
        assert_eq!(c.agent.critic_hidden, vec![512, 512, 512]);
    }

    #[test]
    fn toy_preset() {
        let c = parse_config("", &[], Mode::Toy).unwrap();
        assert_eq!(c.env, "multigoal");
        assert_eq!(c.solver.n_steps, 24);
        assert_eq!(c.solver.scheme, Scheme::Euler);
        assert_eq!(c.solver.prior, Prior::StandardGaussian);
        assert_eq!(c.agent.buffer_capacity, 100_000);
        assert_eq!(c.agent.actor_hidden, vec![64, 64]);
        assert_eq!(c.agent.warmup_steps, 5_000);
        assert_eq!(c.total_steps, 30_000);
    }

    #[test]
    fn overrides_apply_last() {
        let c = parse_config("agent.batch = 32\n", &["agent.batch=64".into()], Mode::Train).unwrap();
        assert_eq!(c.agent.batch_size, 64);
        let d = parse_config("", &[], Mode::Train).unwrap();
        assert_eq!(RunConfig { agent: AgentConfig { batch_size: 64, ..d.agent.clone() }, ..d }, c);
    }

    #[test]
    fn rejects_bad_input() {
        let key_of = |r: Result<RunConfig>| match r {
            Err(FlacError::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(key_of(parse_config("agent.gamma = 1.5", &[], Mode::Train)), "agent.gamma");
        assert_eq!(key_of(parse_config("agent.bogus = 1", &[], Mode::Train)), "agent.bogus");
        assert_eq!(key_of(parse_config("agent.batch = many", &[], Mode::Train)), "agent.batch");
        assert_eq!(key_of(parse_config("run.env = mujoco", &[], Mode::Train)), "run.env");
        assert_eq!(key_of(parse_config("solver.scheme = rk4", &[], Mode::Train)), "solver.scheme");
        assert!(parse_config("no equals sign", &[], Mode::Train).is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("# header\n\nagent.batch = 8 # trailing\n", &[], Mode::Train).unwrap();
        assert_eq!(c.agent.batch_size, 8);
    }

    #[test]
    fn alpha_modes() {
        let c = parse_config("agent.alpha = 0", &[], Mode::Toy).unwrap();
        assert_eq!(c.agent.alpha, AlphaMode::Fixed(0.0));
        let c = parse_config("agent.init_log_alpha = -1\nagent.alpha = auto", &[], Mode::Toy).unwrap();
        assert_eq!(c.agent.alpha, AlphaMode::Auto { init_log_alpha: -1.0 });
    }

    #[test]
    fn resolved_text_round_trips() {
        let overrides: Vec<String> = [
            "agent.batch=17",
            "solver.action_bound=inf",
            "net.actor_hidden=7,9",
            "agent.alpha_lr=0.0123456789",
            "field.state=0.1,-2.5",
            "field.checkpoint=/tmp/x.ckpt",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for mode in [Mode::Toy, Mode::Train] {
            let c = parse_config("", &overrides, mode).unwrap();
            let again = parse_config(&c.to_text(), &[], mode).unwrap();
            assert_eq!(again, c);
            assert_eq!(again.hash(), c.hash());
        }
        let fixed = parse_config("agent.alpha = 0.25", &[], Mode::Train).unwrap();
        assert_eq!(parse_config(&fixed.to_text(), &[], Mode::Train).unwrap(), fixed);
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config("", &[], Mode::Train).unwrap();
        let b = parse_config("agent.batch = 8", &[], Mode::Train).unwrap();
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), b.hash());
    }
}
