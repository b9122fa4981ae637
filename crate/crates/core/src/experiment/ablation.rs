//! Sweeps over the energy-budget coefficient.

use std::path::Path;

use super::toy::train_toy_agent;
use super::train::run_train;
use super::{write_csv, write_resolved_config, RunArtifacts, RunConfig};
use crate::agent::AgentConfig;
use crate::error::{FlacError, Result};

pub const SUMMARY_HEADER: &str = "coefficient,final_return,final_energy,final_alpha";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationCell {
    pub coefficient: f64,
    /// Final evaluation return (mean reward of the action cloud on the bandit).
    pub final_return: f64,
    pub final_energy: f64,
    pub final_alpha: f64,
    /// Final mode coverage; bandit runs only.
    pub coverage: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub cells: Vec<AblationCell>,
    pub artifacts: RunArtifacts,
}

/// The configuration of one cell: the base run with `energy_coeff = c`.
pub fn cell_config(cfg: &RunConfig, coefficient: f64) -> RunConfig {
    RunConfig {
        agent: AgentConfig {
            energy_coeff: coefficient,
            ..cfg.agent.clone()
        },
        ..cfg.clone()
    }
}

/// Runs one independent cell per coefficient, all with the base seed.
pub fn run_ablation(cfg: &RunConfig, out: Option<&Path>) -> Result<AblationOutcome> {
    if cfg.ablation_grid.is_empty() {
        return Err(FlacError::config("ablation.grid", "needs at least one coefficient"));
    }
    let mut artifacts = RunArtifacts::default();
    if let Some(d) = out {
        artifacts.push(write_resolved_config(cfg, d)?);
    }
    let mut cells = Vec::new();
    for &c in &cfg.ablation_grid {
        let cell_cfg = cell_config(cfg, c);
        let dir = out.map(|d| d.join(format!("c_{c}")));
        let cell = if cfg.env == "multigoal" {
            let (run, art) = train_toy_agent(&cell_cfg, cell_cfg.agent.clone(), "flac", dir.as_deref())?;
            artifacts.extend(art);
            let e = run.final_eval();
            AblationCell {
                coefficient: c,
                final_return: e.mean_reward,
                final_energy: e.mean_energy,
                final_alpha: e.alpha,
                coverage: Some(e.coverage),
            }
        } else {
            let run = run_train(&cell_cfg, dir.as_deref())?;
            artifacts.extend(run.artifacts.clone());
            AblationCell {
                coefficient: c,
                final_return: run.final_return(),
                final_energy: run.final_energy(),
                final_alpha: run.agent.alpha(),
                coverage: None,
            }
        };
        cells.push(cell);
    }
    if let Some(d) = out {
        let path = d.join("ablation_summary.csv");
        write_csv(
            &path,
            SUMMARY_HEADER,
            cells
                .iter()
                .map(|c| format!("{},{},{},{}", c.coefficient, c.final_return, c.final_energy, c.final_alpha)),
        )?;
        artifacts.push(path);
    }
    Ok(AblationOutcome { cells, artifacts })
}
