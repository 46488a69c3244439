//! Experiment orchestration: independent runs on a worker pool, the studies
//! built on top of them, and the tables and manifest they emit.

mod studies;
mod tables;

pub use studies::{
    ablation_config, run_ablation, run_pareto_scan, run_sensitivity, stability_windows, AblationRow, ParetoRow,
    SensitivityRow, StabilityRow, ABLATION_VARIANTS,
};
pub use tables::{
    aggregate_records, efficiency_rows, fairness_rows, hash_artifact, read_records_jsonl, robustness_rows,
    significance_rows, write_csv, write_manifest, write_records_jsonl, write_report, write_residuals, AggregateRow,
    EfficiencyRow, FairnessRow, RobustnessRow, SignificanceRow, MANIFEST_FILE, RECORDS_FILE,
};

use rayon::prelude::*;

use crate::baselines::{run_grape, run_quasi_newton};
use crate::config::{ExperimentConfig, TaskConfig};
use crate::error::{invalid, Result};
use crate::padmm::{run_padmm, run_padmm_warm};
use crate::record::{Method, RunRecord};
use crate::robust::{build_ensemble, evaluate_robustness, run_padmm_robust};

/// Runs one method on one task; errors propagate.
pub fn run_method(cfg: &ExperimentConfig, tc: &TaskConfig, method: Method, seed: u64) -> Result<RunRecord> {
    let task = &tc.task;
    let mode = cfg.gradient_mode;
    match method {
        Method::Grape => run_grape(task, &tc.grape, seed, mode),
        Method::QuasiNewton => run_quasi_newton(task, &tc.quasi_newton, seed, mode),
        Method::Padmm => run_padmm(task, &tc.padmm, seed),
        Method::PadmmWarm => run_padmm_warm(task, &tc.padmm, seed),
        Method::PadmmWarmRobust => {
            let ensemble = build_ensemble(task, &tc.ensemble, seed)?;
            run_padmm_robust(task, &tc.padmm, &ensemble, seed)
        }
    }
}

/// Runs one cell and attaches its robustness report. Failures become
/// flagged placeholder records instead of errors.
pub fn run_cell(cfg: &ExperimentConfig, tc: &TaskConfig, method: Method, seed: u64) -> RunRecord {
    let result = run_method(cfg, tc, method, seed).and_then(|mut rec| {
        rec.robustness = Some(evaluate_robustness(&rec.final_field, &tc.task, &cfg.robustness)?);
        Ok(rec)
    });
    match result {
        Ok(rec) => {
            log::info!(
                "{} {} seed {}: fidelity {:.6}",
                tc.task.name,
                method,
                seed,
                rec.fidelity
            );
            rec
        }
        Err(e) => {
            log::warn!("{} {} seed {} failed: {e}", tc.task.name, method, seed);
            RunRecord::failure(&tc.task, method, seed, &e.to_string())
        }
    }
}

/// Thread pool with `workers` threads (0 = machine default).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))
}

/// Every `(task, method, seed)` cell, in that nesting order. The returned
/// records keep this order whatever the scheduling.
pub fn run_multiseed(
    cfg: &ExperimentConfig,
    tasks: &[String],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<RunRecord>> {
    let mut cells = Vec::new();
    for name in tasks {
        let tc = cfg.task(name)?;
        for &m in methods {
            for &s in seeds {
                cells.push((tc, m, s));
            }
        }
    }
    let pool = worker_pool(cfg.workers)?;
    Ok(pool.install(|| cells.par_iter().map(|&(tc, m, s)| run_cell(cfg, tc, m, s)).collect()))
}

/// All configured tasks, methods and seeds.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let tasks: Vec<String> = cfg.tasks.keys().cloned().collect();
    run_multiseed(cfg, &tasks, &cfg.methods, &cfg.seeds)
}
