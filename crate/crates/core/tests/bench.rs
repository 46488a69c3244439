use std::fs;
use std::path::Path;

use padmm_core::bench::{
    ablation_config, aggregate_records, run_ablation, run_benchmark, run_pareto_scan, run_sensitivity,
    stability_windows, SensitivityRow, MANIFEST_FILE,
};
use padmm_core::commands::{dispatch, Command, RunSelection, Status};
use padmm_core::config::ExperimentConfig;
use padmm_core::padmm::run_padmm_warm;
use padmm_core::record::{Method, RunRecord};
use padmm_core::tasks;
use serde_json::Value;

/// Single-task configuration with budgets small enough for unit testing.
fn small_config(task: &str, seeds: &[u64]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(task).unwrap();
    for tc in cfg.tasks.values_mut() {
        tc.grape.iterations = 15;
        tc.quasi_newton.max_iters = 10;
        tc.padmm.outer_steps = 12;
        tc.padmm.warm_start_steps = 5;
    }
    cfg.seeds = seeds.to_vec();
    cfg.workers = 2;
    cfg.robustness.drift_shapes = 1;
    cfg
}

#[test]
fn single_record_aggregate_has_zero_spread() {
    let cfg = small_config(tasks::ONE_QUBIT, &[3]);
    cfg.validate().unwrap();
    let tc = cfg.task(tasks::ONE_QUBIT).unwrap();
    let rec = run_padmm_warm(&tc.task, &tc.padmm, 3).unwrap();
    let rows = aggregate_records(std::slice::from_ref(&rec)).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!(r.single_sample);
    assert_eq!(
        (r.n, r.fidelity_std, r.fidelity_ci95_lo, r.fidelity_ci95_hi),
        (1, 0.0, rec.fidelity, rec.fidelity)
    );
}

#[test]
fn failed_records_are_left_out_of_aggregates() {
    let cfg = small_config(tasks::ONE_QUBIT, &[3, 7]);
    let tc = cfg.task(tasks::ONE_QUBIT).unwrap();
    let ok = run_padmm_warm(&tc.task, &tc.padmm, 3).unwrap();
    let bad = RunRecord::failure(&tc.task, Method::PadmmWarm, 7, "boom");
    let rows = aggregate_records(&[ok.clone(), bad]).unwrap();
    assert_eq!((rows[0].n, rows[0].n_failed), (1, 1));
    assert_eq!(rows[0].fidelity_mean, ok.fidelity);
}

#[test]
fn multiseed_order_and_shape() {
    let cfg = small_config(tasks::ONE_QUBIT, &[3, 7]);
    let recs = run_benchmark(&cfg).unwrap();
    assert_eq!(recs.len(), Method::ALL.len() * 2);
    let keys: Vec<(Method, u64)> = recs.iter().map(|r| (r.method, r.seed)).collect();
    let expect: Vec<(Method, u64)> = Method::ALL.iter().flat_map(|&m| [(m, 3), (m, 7)]).collect();
    assert_eq!(keys, expect);
    assert!(recs.iter().all(|r| r.robustness.is_some() && !r.failed()));
}

#[test]
fn ablation_variants() {
    let cfg = small_config(tasks::QUTRIT, &[3]);
    let tc = cfg.task(tasks::QUTRIT).unwrap();
    let none = ablation_config(tc, "no-constraints").unwrap();
    assert_eq!(none.active_blocks(&tc.task), [false, false, false]);
    assert_eq!(ablation_config(tc, "full").unwrap(), tc.padmm);
    assert!(ablation_config(tc, "bogus").is_err());

    let rows = run_ablation(&cfg, tasks::QUTRIT).unwrap();
    let get = |v: &str| rows.iter().find(|r| r.variant == v).unwrap();
    let full = get("full");
    let free = get("no-constraints");
    assert!(get("bandlimit-only").bandwidth_excess <= free.bandwidth_excess);
    assert!(full.total_variation <= free.total_variation);
    assert!(get("l1-only").final_violation <= 1.0);
}

#[test]
fn one_cell_pareto_grid() {
    let mut cfg = small_config(tasks::ONE_QUBIT, &[3]);
    let g = &mut cfg.pareto;
    g.lambda1_scales = vec![1.0];
    g.lambda_tv_scales = vec![1.0];
    g.cutoff_scales = vec![1.0];
    g.eta_scales = vec![1.0];
    let rows = run_pareto_scan(&cfg, tasks::ONE_QUBIT).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].kind, "scan");
    assert!(!rows[0].dominated);
    let tc = cfg.task(tasks::ONE_QUBIT).unwrap();
    let direct = run_padmm_warm(&tc.task, &tc.padmm, cfg.pareto.seed).unwrap();
    assert_eq!(rows[0].fidelity, direct.fidelity);
}

#[test]
fn sensitivity_default_cell_equals_default_run() {
    let cfg = small_config(tasks::TWO_QUBIT, &[3]);
    let rows = run_sensitivity(&cfg, tasks::TWO_QUBIT).unwrap();
    assert_eq!(rows.len(), 9);
    let tc = cfg.task(tasks::TWO_QUBIT).unwrap();
    let direct = run_padmm_warm(&tc.task, &tc.padmm, cfg.sensitivity.seed).unwrap();
    for setting in ["rho_scale=1", "inner_steps=4"] {
        let r = rows.iter().find(|r| r.setting == setting).unwrap();
        assert_eq!(r.fidelity, direct.fidelity, "{setting}");
    }
}

#[test]
fn stability_window_example() {
    let row = |s: &str, f: f64| SensitivityRow {
        task: "t".into(),
        axis: "a".into(),
        setting: s.into(),
        value: 0.0,
        fidelity: f,
        bandwidth_excess: 0.0,
        total_variation: 0.0,
    };
    let rows = [row("x", 0.90), row("y", 0.95), row("z", 0.945)];
    let w = stability_windows(&rows, 0.01);
    assert_eq!(w.len(), 1);
    assert_eq!((w[0].best_setting.as_str(), w[0].window.as_str()), ("y", "y;z"));
}

fn manifest_files(dir: &Path) -> Value {
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    m["files"].clone()
}

#[test]
fn bench_then_report_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tasks::ONE_QUBIT, &[3, 7]);
    cfg.output_dir = a.path().to_path_buf();
    let out = dispatch(Command::Bench, &cfg, &RunSelection::default()).unwrap();
    assert_eq!(out.status, Status::Success);
    let bench_files = manifest_files(a.path());

    cfg.output_dir = b.path().to_path_buf();
    dispatch(Command::Bench, &cfg, &RunSelection::default()).unwrap();
    assert_eq!(bench_files, manifest_files(b.path()));

    let before = fs::read(a.path().join("benchmark.csv")).unwrap();
    cfg.output_dir = a.path().to_path_buf();
    dispatch(Command::Report, &cfg, &RunSelection::default()).unwrap();
    assert_eq!(before, fs::read(a.path().join("benchmark.csv")).unwrap());
    assert_eq!(bench_files, manifest_files(a.path()));
    let names: Vec<&String> = bench_files.as_object().unwrap().keys().collect();
    for f in [
        "benchmark.csv",
        "efficiency.csv",
        "fairness.csv",
        "robustness.csv",
        "significance.csv",
        "records.jsonl",
    ] {
        assert!(names.iter().any(|n| *n == f), "{f} missing");
    }
}

#[test]
fn fairness_stage_one_is_band_feasible() {
    use padmm_core::baselines::filter_stages;
    use padmm_core::baselines::SmoothingKernel;
    use padmm_core::structure::bandwidth_excess;
    let cfg = small_config(tasks::QUTRIT, &[3]);
    let tc = cfg.task(tasks::QUTRIT).unwrap();
    let rec = padmm_core::bench::run_method(&cfg, tc, Method::QuasiNewton, 3).unwrap();
    let cutoff = tc.padmm.cutoff;
    let st = filter_stages(&rec.final_field, &tc.task, cutoff, SmoothingKernel::default()).unwrap();
    assert!(bandwidth_excess(&st.band_limited, cutoff, tc.task.dt) <= 1e-12);
}
