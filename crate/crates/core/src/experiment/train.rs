//! Episodic training with periodic evaluation.

use std::fs;
use std::path::Path;

use super::runner::{evaluate_returns, TraceRow, Trainer};
use super::{svg, write_csv, write_resolved_config, RunArtifacts, RunConfig};
use crate::agent::{Agent, StepMetrics};
use crate::error::Result;

pub const METRICS_HEADER: &str = "step,episode_return,critic_loss,actor_loss,alpha,mean_energy,e_tgt";

/// One metrics row. Loss and energy columns average the updates since the
/// previous row; they are NaN before learning starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub step: usize,
    pub episode_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_energy: f64,
    pub e_tgt: f64,
}

impl EvalRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.episode_return, self.critic_loss, self.actor_loss, self.alpha, self.mean_energy, self.e_tgt
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub evals: Vec<EvalRow>,
    pub trace: Vec<TraceRow>,
    pub initial_log_alpha: f64,
    pub train_returns: Vec<f64>,
    pub agent: Agent,
    pub artifacts: RunArtifacts,
}

impl TrainOutcome {
    pub fn final_return(&self) -> f64 {
        self.evals.last().map_or(f64::NAN, |e| e.episode_return)
    }

    pub fn final_energy(&self) -> f64 {
        self.evals.last().map_or(f64::NAN, |e| e.mean_energy)
    }
}

fn mean_of(window: &[StepMetrics], f: impl Fn(&StepMetrics) -> f64) -> f64 {
    if window.is_empty() {
        f64::NAN
    } else {
        window.iter().map(f).sum::<f64>() / window.len() as f64
    }
}

/// Collect/learn loop with an evaluation every `eval_interval` steps and at
/// the end. With `out`, writes the resolved config first, then the metrics
/// CSV, energy trace, optional plots and the final checkpoint.
pub fn run_train(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let mut artifacts = RunArtifacts::default();
    if let Some(d) = out {
        artifacts.push(write_resolved_config(cfg, d)?);
    }
    let mut trainer = Trainer::new(&cfg.env, cfg.agent.clone(), cfg.solver.clone())?;
    let mut evals = Vec::new();
    let mut window: Vec<StepMetrics> = Vec::new();
    while trainer.steps < cfg.total_steps {
        if let Some(m) = trainer.step()? {
            window.push(m);
        }
        if trainer.steps % cfg.eval_interval == 0 || trainer.steps == cfg.total_steps {
            let agent = &trainer.agent;
            evals.push(EvalRow {
                step: trainer.steps,
                episode_return: evaluate_returns(agent, &cfg.env, cfg.eval_episodes, cfg.seed())?,
                critic_loss: mean_of(&window, |m| m.critic_loss),
                actor_loss: mean_of(&window, |m| m.actor_loss),
                alpha: agent.alpha(),
                mean_energy: mean_of(&window, |m| m.mean_energy),
                e_tgt: agent.target_energy(),
            });
            window.clear();
        }
    }

    if let Some(d) = out {
        let path = d.join("metrics.csv");
        write_csv(&path, METRICS_HEADER, evals.iter().map(EvalRow::csv))?;
        artifacts.push(path);
        let path = d.join("trace.csv");
        write_csv(
            &path,
            "step,mean_energy,alpha",
            trainer
                .trace
                .iter()
                .map(|r| format!("{},{},{}", r.step, r.metrics.mean_energy, r.metrics.alpha)),
        )?;
        artifacts.push(path);
        if cfg.write_svg {
            let ret: Vec<(f64, f64)> = evals.iter().map(|e| (e.step as f64, e.episode_return)).collect();
            let path = d.join("returns.svg");
            fs::write(&path, svg::lines(&[("eval return", &ret)], "evaluation return"))?;
            artifacts.push(path);
            let energy: Vec<(f64, f64)> = trainer.trace.iter().map(|r| (r.step as f64, r.metrics.mean_energy)).collect();
            let target: Vec<(f64, f64)> = trainer
                .trace
                .iter()
                .map(|r| (r.step as f64, trainer.agent.target_energy()))
                .collect();
            let path = d.join("energy.svg");
            fs::write(&path, svg::lines(&[("mean energy", &energy), ("target", &target)], "energy feedback"))?;
            artifacts.push(path);
        }
        if cfg.write_checkpoint {
            let path = d.join("checkpoint.txt");
            fs::write(&path, trainer.agent.checkpoint(&cfg.hash()))?;
            artifacts.push(path);
        }
    }

    Ok(TrainOutcome {
        evals,
        trace: trainer.trace,
        initial_log_alpha: trainer.initial_log_alpha,
        train_returns: trainer.train_returns,
        agent: trainer.agent,
        artifacts,
    })
}
