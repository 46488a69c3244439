use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use padmm_core::commands::{dispatch, error_record, Command, RunSelection, EXIT_ABORTED};
use padmm_core::config::{load_config, ExperimentConfig};
use padmm_core::dynamics::GradientMode;
use padmm_core::record::Method;
use padmm_core::Result;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subcommand {
    Run,
    Bench,
    Pareto,
    Ablate,
    Sensitivity,
    Fairness,
    Robust,
    Stats,
    Report,
}

impl From<Subcommand> for Command {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::Run => Command::Run,
            Subcommand::Bench => Command::Bench,
            Subcommand::Pareto => Command::Pareto,
            Subcommand::Ablate => Command::Ablate,
            Subcommand::Sensitivity => Command::Sensitivity,
            Subcommand::Fairness => Command::Fairness,
            Subcommand::Robust => Command::Robust,
            Subcommand::Stats => Command::Stats,
            Subcommand::Report => Command::Report,
        }
    }
}

/// Structured pulse synthesis: PADMM, baselines and the benchmark harness.
///
/// Exit status is 0 on success, 2 when the command completed but some runs
/// failed, and 1 when it aborted (an error record is printed on stderr).
#[derive(Debug, Parser)]
#[command(name = "padmm", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,

    /// JSON config merged over the selected preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in preset: 1q-x, qutrit-x, 2q-ent or all.
    #[arg(long)]
    preset: Option<String>,

    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (0 = machine default).
    #[arg(long)]
    workers: Option<usize>,

    /// Gradient formula: paper-form or exact.
    #[arg(long = "grad-mode")]
    grad_mode: Option<GradientMode>,

    /// Method(s), comma-separated; `run` uses the first.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,

    /// Task for `run` (default: first configured task).
    #[arg(long)]
    task: Option<String>,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = load_config(cli.config.as_deref(), cli.preset.as_deref())?;
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(mode) = cli.grad_mode {
        cfg.set_gradient_mode(mode);
    }
    if let Some(methods) = &cli.method {
        cfg.methods = methods.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let result = resolve(&cli).and_then(|cfg| {
        let selection = RunSelection {
            task: cli.task.clone(),
            method: cli.method.as_ref().and_then(|m| m.first().copied()),
            seed: cfg.seeds.first().copied(),
        };
        dispatch(command, &cfg, &selection)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{}", error_record(command.as_str(), &e));
            ExitCode::from(EXIT_ABORTED as u8)
        }
    }
}
