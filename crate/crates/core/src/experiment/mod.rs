//! Configuration, runners and artifact emission for the command-line tool.

mod ablation;
mod config;
mod runner;
pub mod svg;
mod toy;
mod train;

pub use ablation::{cell_config, run_ablation, AblationCell, AblationOutcome, SUMMARY_HEADER};
pub use config::{load_config, parse_config, FieldExport, Mode, RunConfig};
pub use runner::{evaluate_returns, sample_bandit_actions, TraceRow, Trainer};
pub use toy::{evaluate_toy, run_toy, train_toy_agent, ToyEval, ToyOutcome, ToyRun, SNAPSHOT_TAUS};
pub use train::{run_train, EvalRow, TrainOutcome, METRICS_HEADER};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::agent::Agent;
use crate::env::make_env;
use crate::error::{FlacError, Result};
use crate::flow::{export_field_grid, write_field_csv, GridSpec};
use crate::theory::{run_all_checks_with, CheckReport, Estimator};

/// Files written by a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
}

impl RunArtifacts {
    pub fn push(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn extend(&mut self, other: RunArtifacts) {
        self.files.extend(other.files);
    }

    /// Paths that are missing or empty.
    pub fn missing(&self) -> Vec<&Path> {
        self.files
            .iter()
            .filter(|p| fs::metadata(p).map_or(true, |m| m.len() == 0))
            .map(PathBuf::as_path)
            .collect()
    }
}

/// Name of the resolved configuration written into every run directory.
pub const RESOLVED_CONFIG: &str = "config.resolved";

pub(crate) fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn write_resolved_config(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_text())?;
    Ok(path)
}

/// Creates `<base>/<env>_<seed>_<unix seconds>`, suffixing `-k` on collision.
pub fn make_run_dir(base: &Path, env: &str, seed: u64) -> Result<PathBuf> {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let stem = format!("{env}_{seed}_{secs}");
    let mut dir = base.join(&stem);
    let mut k = 1;
    while dir.exists() {
        dir = base.join(format!("{stem}-{k}"));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs every theory check, printing the report table. Returns whether all
/// checks passed.
pub fn run_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<(bool, Vec<CheckReport>)> {
    let estimator = if cfg.check_wrong_sign {
        Estimator::WrongSign
    } else {
        Estimator::Correct
    };
    let reports = run_all_checks_with(cfg.seed(), estimator)?;
    writeln!(out, "{}", CheckReport::CSV_HEADER)?;
    for r in &reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok((reports.iter().all(|r| r.pass), reports))
}

/// Writes the velocity field of an actor on a grid at one generation time.
pub fn run_export_field(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let spec = make_env(&cfg.env)?.spec().clone();
    if spec.action_dim != 2 {
        return Err(FlacError::config("run.env", "field export needs a two-dimensional action space"));
    }
    let mut agent = Agent::new(cfg.agent.clone(), cfg.solver.clone(), spec.state_dim, spec.action_dim)?;
    if let Some(path) = &cfg.field.checkpoint {
        let text = fs::read_to_string(path)
            .map_err(|e| FlacError::config("field.checkpoint", format!("cannot read {}: {e}", path.display())))?;
        agent.restore(&text)?;
    }
    let state = if cfg.field.state.is_empty() {
        vec![0.0; spec.state_dim]
    } else {
        cfg.field.state.clone()
    };
    if state.len() != spec.state_dim {
        return Err(FlacError::config(
            "field.state",
            format!("expected {} values, got {}", spec.state_dim, state.len()),
        ));
    }
    let grid = GridSpec {
        min: cfg.field.grid_min,
        max: cfg.field.grid_max,
        resolution: cfg.field.resolution,
    };
    let rows = export_field_grid(&agent.actor, &state, cfg.field.tau, grid)?;
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("field_tau{}.csv", cfg.field.tau));
    let mut buf = Vec::new();
    write_field_csv(&rows, &mut buf)?;
    fs::write(&path, buf)?;
    if cfg.write_svg {
        fs::write(
            dir.join(format!("field_tau{}.svg", cfg.field.tau)),
            svg::quiver(&rows, &format!("tau {}", cfg.field.tau)),
        )?;
    }
    Ok(path)
}
