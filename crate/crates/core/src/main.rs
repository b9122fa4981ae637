use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flac::experiment::{
    load_config, make_run_dir, run_ablation, run_check, run_export_field, run_toy, run_train, Mode, RunConfig,
};
use flac::FlacError;

#[derive(Parser)]
#[command(name = "flac", version, about = "Field least-energy actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eight-goal bandit: regularized flow versus the unregularized baseline.
    Toy(RunArgs),
    /// Train on an episodic environment with periodic evaluation.
    Train(RunArgs),
    /// Sweep the energy-budget coefficient.
    Ablate(RunArgs),
    /// Run the numerical checks of the theory and print the report table.
    Check(RunArgs),
    /// Write a velocity-field grid of a (checkpointed) actor.
    ExportField(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (same as `run.seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Base directory for run outputs (same as `run.out_dir=DIR`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self, mode: Mode) -> flac::Result<RunConfig> {
        let mut overrides = Vec::new();
        if let Some(s) = self.seed {
            overrides.push(format!("run.seed={s}"));
        }
        if let Some(o) = &self.out {
            overrides.push(format!("run.out_dir={}", o.display()));
        }
        overrides.extend(self.overrides.iter().cloned());
        load_config(self.config.as_deref(), &overrides, mode)
    }
}

fn run(cli: Cli) -> flac::Result<bool> {
    let (mode, args) = match &cli.command {
        Command::Toy(a) => (Mode::Toy, a),
        Command::Train(a) => (Mode::Train, a),
        Command::Ablate(a) => (Mode::Ablate, a),
        Command::Check(a) => (Mode::Check, a),
        Command::ExportField(a) => (Mode::ExportField, a),
    };
    let cfg = args.resolve(mode)?;
    if mode == Mode::Check {
        let (pass, _) = run_check(&cfg, &mut std::io::stdout())?;
        return Ok(pass);
    }
    let dir = make_run_dir(&cfg.out_dir, &cfg.env, cfg.seed())?;
    println!("output directory: {}", dir.display());
    match mode {
        Mode::Toy => {
            let out = run_toy(&cfg, Some(&dir))?;
            for run in std::iter::once(&out.flac).chain(out.naive.as_ref()) {
                let e = run.final_eval();
                println!(
                    "{}: coverage {}/8, mean reward {:.4}, mean energy {:.4}, alpha {:.4e}",
                    run.label, e.coverage, e.mean_reward, e.mean_energy, e.alpha
                );
            }
        }
        Mode::Train => {
            let out = run_train(&cfg, Some(&dir))?;
            for e in &out.evals {
                println!(
                    "step {}: return {:.3}, mean energy {:.4}, alpha {:.4e}",
                    e.step, e.episode_return, e.mean_energy, e.alpha
                );
            }
        }
        Mode::Ablate => {
            let out = run_ablation(&cfg, Some(&dir))?;
            for c in &out.cells {
                println!(
                    "C = {}: return {:.4}, energy {:.4}, alpha {:.4e}",
                    c.coefficient, c.final_return, c.final_energy, c.final_alpha
                );
            }
        }
        Mode::ExportField => {
            let path = run_export_field(&cfg, &dir)?;
            println!("wrote {}", path.display());
        }
        Mode::Check => unreachable!("handled above"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ FlacError::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
