//! Subcommand dispatch shared by the command-line tool and the bindings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};

use crate::bench::{
    fairness_rows, read_records_jsonl, robustness_rows, run_ablation, run_benchmark, run_method, run_multiseed,
    run_pareto_scan, run_sensitivity, significance_rows, stability_windows, write_csv, write_manifest,
    write_records_jsonl, write_report, write_residuals, RECORDS_FILE,
};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::record::{Method, RunRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
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

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Run,
        Command::Bench,
        Command::Pareto,
        Command::Ablate,
        Command::Sensitivity,
        Command::Fairness,
        Command::Robust,
        Command::Stats,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Bench => "bench",
            Command::Pareto => "pareto",
            Command::Ablate => "ablate",
            Command::Sensitivity => "sensitivity",
            Command::Fairness => "fairness",
            Command::Robust => "robust",
            Command::Stats => "stats",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown subcommand `{s}`")))
    }
}

/// Which single run `run` executes; unset fields take the first configured
/// task, method and seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSelection {
    pub task: Option<String>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Completed, but some cells failed and were left out of aggregates.
    Flagged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Flagged => 2,
        }
    }

    fn of(records: &[RunRecord]) -> Self {
        if records.iter().any(RunRecord::failed) {
            Status::Flagged
        } else {
            Status::Success
        }
    }
}

/// Exit code for an aborted command.
pub const EXIT_ABORTED: i32 = 1;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: Command,
    pub status: Status,
    pub files: Vec<PathBuf>,
    /// Machine-readable summary printed on standard output.
    pub summary: Value,
}

/// Machine-readable description of an aborted command.
pub fn error_record(command: &str, err: &Error) -> Value {
    let kind = match err {
        Error::NotHermitian { .. } => "not-hermitian",
        Error::NotUnitary { .. } => "not-unitary",
        Error::ShapeMismatch { .. } => "shape-mismatch",
        Error::InvalidParameter(_) => "invalid-parameter",
        Error::NonFinite { .. } => "non-finite",
        Error::Config { .. } => "config",
        Error::MissingInput(_) => "missing-input",
        Error::Internal(_) => "internal",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    };
    json!({
        "status": "aborted",
        "exit_code": EXIT_ABORTED,
        "command": command,
        "kind": kind,
        "message": err.to_string(),
    })
}

pub fn run_summary(rec: &RunRecord) -> Value {
    json!({
        "task": rec.task,
        "method": rec.method,
        "seed": rec.seed,
        "fidelity": rec.fidelity,
        "total_variation": rec.metrics.total_variation,
        "bandwidth_excess": rec.metrics.bandwidth_excess,
        "objective_evals": rec.objective_evals,
        "gradient_evals": rec.gradient_evals,
        "wall_clock_s": rec.wall_clock_s,
        "final_violation": rec.residual_trace.as_ref().and_then(|t| t.last()).map(|r| r.violation),
        "flags": rec.flags,
    })
}

fn stored_records(dir: &Path) -> Result<Vec<RunRecord>> {
    read_records_jsonl(&dir.join(RECORDS_FILE))
}

/// Stored records when present, otherwise fresh runs of `methods`.
fn records_or_run(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<RunRecord>> {
    let path = cfg.output_dir.join(RECORDS_FILE);
    if path.exists() {
        log::info!("using stored records from {}", path.display());
        return read_records_jsonl(&path);
    }
    let tasks: Vec<String> = cfg.tasks.keys().cloned().collect();
    run_multiseed(cfg, &tasks, methods, &cfg.seeds)
}

/// Executes `command` and writes its artifacts plus the manifest into
/// `cfg.output_dir`.
pub fn dispatch(command: Command, cfg: &ExperimentConfig, selection: &RunSelection) -> Result<Outcome> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut status = Status::Success;
    let mut summary = Value::Null;
    let task_names: Vec<String> = cfg.tasks.keys().cloned().collect();

    match command {
        Command::Run => {
            let task = selection.task.clone().unwrap_or_else(|| task_names[0].clone());
            let method = selection.method.unwrap_or(cfg.methods[0]);
            let seed = selection.seed.unwrap_or(cfg.seeds[0]);
            let rec = run_method(cfg, cfg.task(&task)?, method, seed)?;
            let path = dir.join(format!("run_{}_{}_{}.json", rec.task, rec.method, rec.seed));
            fs::write(&path, serde_json::to_string_pretty(&rec)?)?;
            files.push(path);
            files.extend(write_residuals(dir, &rec)?);
            summary = run_summary(&rec);
        }
        Command::Bench => {
            let records = run_benchmark(cfg)?;
            status = Status::of(&records);
            let path = dir.join(RECORDS_FILE);
            write_records_jsonl(&path, &records)?;
            files.push(path);
            files.extend(write_report(cfg, &records, dir)?);
        }
        Command::Report => {
            let records = stored_records(dir)?;
            status = Status::of(&records);
            files.extend(write_report(cfg, &records, dir)?);
        }
        Command::Stats => {
            let records = stored_records(dir)?;
            status = Status::of(&records);
            let path = dir.join("significance.csv");
            write_csv(&path, &significance_rows(&records)?)?;
            files.push(path);
        }
        Command::Fairness => {
            let records = records_or_run(cfg, &[Method::Grape, Method::QuasiNewton, Method::PadmmWarm])?;
            status = Status::of(&records);
            let path = dir.join("fairness.csv");
            write_csv(&path, &fairness_rows(cfg, &records)?)?;
            files.push(path);
        }
        Command::Robust => {
            let records = records_or_run(cfg, &[Method::PadmmWarm, Method::PadmmWarmRobust])?;
            status = Status::of(&records);
            let path = dir.join("robustness.csv");
            write_csv(&path, &robustness_rows(&records))?;
            files.push(path);
        }
        Command::Pareto => {
            let mut rows = Vec::new();
            for t in &task_names {
                rows.extend(run_pareto_scan(cfg, t)?);
            }
            let path = dir.join("pareto.csv");
            write_csv(&path, &rows)?;
            files.push(path);
        }
        Command::Ablate => {
            let mut rows = Vec::new();
            for t in &task_names {
                rows.extend(run_ablation(cfg, t)?);
            }
            let path = dir.join("ablation.csv");
            write_csv(&path, &rows)?;
            files.push(path);
        }
        Command::Sensitivity => {
            let mut rows = Vec::new();
            for t in &task_names {
                rows.extend(run_sensitivity(cfg, t)?);
            }
            let path = dir.join("sensitivity.csv");
            write_csv(&path, &rows)?;
            files.push(path);
            let path = dir.join("stability_windows.csv");
            write_csv(&path, &stability_windows(&rows, cfg.sensitivity.window_tol))?;
            files.push(path);
        }
    }

    files.push(write_manifest(cfg, dir, command.as_str())?);
    if summary.is_null() {
        summary = json!({
            "command": command.as_str(),
            "status": if status == Status::Success { "success" } else { "flagged" },
            "exit_code": status.exit_code(),
            "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
    }
    Ok(Outcome {
        command,
        status,
        files,
        summary,
    })
}
