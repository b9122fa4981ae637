//! The eight-goal bandit experiment: mode coverage of the energy-regularized
//! flow against the unregularized baseline.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::runner::{sample_bandit_actions, TraceRow, Trainer};
use super::{svg, write_csv, write_resolved_config, RunArtifacts, RunConfig};
use crate::agent::{Agent, AgentConfig, AlphaMode};
use crate::env::{mode_coverage, multigoal_reward, DEFAULT_CAPTURE_RADIUS};
use crate::error::{FlacError, Result};
use crate::flow::{export_field_grid, write_field_csv, GridSpec};
use crate::seed;

/// Field snapshots are taken at these generation times.
pub const SNAPSHOT_TAUS: [f64; 3] = [0.0, 0.5, 1.0];

/// Coverage, reward and energy of one evaluation draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEval {
    pub step: usize,
    pub coverage: usize,
    pub mean_reward: f64,
    pub mean_energy: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct ToyRun {
    pub label: String,
    pub evals: Vec<ToyEval>,
    pub trace: Vec<TraceRow>,
    pub initial_log_alpha: f64,
    pub agent: Agent,
    /// Actions of the final evaluation draw.
    pub final_actions: Array2<f64>,
}

impl ToyRun {
    pub fn final_eval(&self) -> &ToyEval {
        self.evals.last().expect("at least the initial evaluation")
    }
}

#[derive(Clone, Debug)]
pub struct ToyOutcome {
    pub flac: ToyRun,
    pub naive: Option<ToyRun>,
    pub artifacts: RunArtifacts,
}

/// Coverage evaluation from a dedicated stream; the same draw is used at
/// every evaluation so snapshots are comparable.
pub fn evaluate_toy(agent: &Agent, n_samples: usize, run_seed: u64, step: usize) -> Result<(ToyEval, Array2<f64>)> {
    let (actions, energies) = sample_bandit_actions(agent, n_samples, seed::derive(run_seed, seed::EVAL))?;
    let rows: Vec<&[f64]> = actions.rows().into_iter().map(|r| r.to_slice().expect("contiguous")).collect();
    let coverage = mode_coverage(rows.iter().copied(), DEFAULT_CAPTURE_RADIUS);
    let mean_reward = rows.iter().map(|a| multigoal_reward(a)).sum::<f64>() / n_samples as f64;
    let mean_energy = energies.iter().sum::<f64>() / n_samples as f64;
    Ok((
        ToyEval {
            step,
            coverage,
            mean_reward,
            mean_energy,
            alpha: agent.alpha(),
        },
        actions,
    ))
}

fn snapshot(agent: &Agent, actions: &Array2<f64>, step: usize, dir: &Path, svg_on: bool, art: &mut RunArtifacts) -> Result<()> {
    let grid = GridSpec {
        min: -6.0,
        max: 6.0,
        resolution: 20,
    };
    for tau in SNAPSHOT_TAUS {
        let rows = export_field_grid(&agent.actor, &[], tau, grid)?;
        let path = dir.join(format!("field_step{step}_tau{tau:.1}.csv"));
        let mut buf = Vec::new();
        write_field_csv(&rows, &mut buf)?;
        fs::write(&path, buf)?;
        art.push(path);
        if svg_on {
            let path = dir.join(format!("field_step{step}_tau{tau:.1}.svg"));
            fs::write(&path, svg::quiver(&rows, &format!("step {step}, tau {tau:.1}")))?;
            art.push(path);
        }
    }
    let path = dir.join(format!("actions_step{step}.csv"));
    write_csv(
        &path,
        "a1,a2",
        actions.rows().into_iter().map(|r| format!("{:.16e},{:.16e}", r[0], r[1])),
    )?;
    art.push(path);
    if svg_on {
        let path = dir.join(format!("actions_step{step}.svg"));
        fs::write(&path, svg::action_cloud(actions, &format!("actions at step {step}")))?;
        art.push(path);
    }
    Ok(())
}

/// Trains one agent on the bandit, evaluating and snapshotting every
/// `snapshot_interval` steps (and at steps 0 and `total_steps`).
pub fn train_toy_agent(cfg: &RunConfig, agent_cfg: AgentConfig, label: &str, dir: Option<&Path>) -> Result<(ToyRun, RunArtifacts)> {
    let mut art = RunArtifacts::default();
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let run_seed = agent_cfg.seed;
    let mut trainer = Trainer::new(&cfg.env, agent_cfg, cfg.solver.clone())?;
    let mut evals = Vec::new();
    let mut last_actions;
    loop {
        let at_snapshot = trainer.steps % cfg.snapshot_interval == 0 || trainer.steps == cfg.total_steps;
        if at_snapshot {
            let (eval, actions) = evaluate_toy(&trainer.agent, cfg.eval_samples, run_seed, trainer.steps)?;
            if let Some(d) = dir {
                snapshot(&trainer.agent, &actions, trainer.steps, d, cfg.write_svg, &mut art)?;
            }
            evals.push(eval);
            last_actions = actions;
            if trainer.steps == cfg.total_steps {
                break;
            }
        }
        trainer.step()?;
    }

    if let Some(d) = dir {
        let path = d.join("coverage.csv");
        write_csv(
            &path,
            "step,coverage,mean_reward,mean_energy,alpha",
            evals
                .iter()
                .map(|e| format!("{},{},{},{},{}", e.step, e.coverage, e.mean_reward, e.mean_energy, e.alpha)),
        )?;
        art.push(path);
        let path = d.join("trace.csv");
        write_csv(
            &path,
            "step,mean_energy,alpha",
            trace_rows(trainer.initial_log_alpha, &trainer.trace),
        )?;
        art.push(path);
        if cfg.write_svg {
            let path = d.join("trace.svg");
            let energy: Vec<(f64, f64)> = trainer.trace.iter().map(|r| (r.step as f64, r.metrics.mean_energy)).collect();
            let alpha: Vec<(f64, f64)> = trainer.trace.iter().map(|r| (r.step as f64, r.metrics.alpha)).collect();
            fs::write(&path, svg::lines(&[("mean energy", &energy), ("alpha", &alpha)], &format!("{label}: energy and alpha")))?;
            art.push(path);
        }
    }

    Ok((
        ToyRun {
            label: label.to_string(),
            evals,
            trace: trainer.trace,
            initial_log_alpha: trainer.initial_log_alpha,
            agent: trainer.agent,
            final_actions: last_actions,
        },
        art,
    ))
}

fn trace_rows(initial_log_alpha: f64, trace: &[TraceRow]) -> impl Iterator<Item = String> + '_ {
    std::iter::once(format!("0,,{}", initial_log_alpha.exp())).chain(
        trace
            .iter()
            .map(|r| format!("{},{},{}", r.step, r.metrics.mean_energy, r.metrics.alpha)),
    )
}

/// The regularized run and, if configured, the `α = 0` baseline with the
/// same seed.
pub fn run_toy(cfg: &RunConfig, out: Option<&Path>) -> Result<ToyOutcome> {
    if cfg.env != "multigoal" {
        return Err(FlacError::config("run.env", "the toy experiment runs on `multigoal`"));
    }
    let mut artifacts = RunArtifacts::default();
    if let Some(d) = out {
        artifacts.push(write_resolved_config(cfg, d)?);
    }
    let sub = |name: &str| out.map(|d| d.join(name));
    let flac_dir: Option<PathBuf> = sub("flac");
    let (flac, art) = train_toy_agent(cfg, cfg.agent.clone(), "flac", flac_dir.as_deref())?;
    artifacts.extend(art);
    let naive = if cfg.naive_baseline {
        let naive_cfg = AgentConfig {
            alpha: AlphaMode::Fixed(0.0),
            ..cfg.agent.clone()
        };
        let naive_dir = sub("naive");
        let (run, art) = train_toy_agent(cfg, naive_cfg, "naive", naive_dir.as_deref())?;
        artifacts.extend(art);
        Some(run)
    } else {
        None
    };
    if let Some(d) = out {
        let path = d.join("toy_summary.csv");
        let mut rows = vec![summary_row(&flac)];
        if let Some(n) = &naive {
            rows.push(summary_row(n));
        }
        write_csv(&path, "run,final_coverage,final_reward,final_energy,final_alpha", rows.into_iter())?;
        artifacts.push(path);
    }
    Ok(ToyOutcome { flac, naive, artifacts })
}

fn summary_row(run: &ToyRun) -> String {
    let e = run.final_eval();
    format!("{},{},{},{},{}", run.label, e.coverage, e.mean_reward, e.mean_energy, e.alpha)
}
