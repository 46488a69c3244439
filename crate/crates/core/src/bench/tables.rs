use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::filter_baseline;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::record::{Method, RunRecord};
use crate::robust::PerturbationKind;
use crate::stats::{aggregate, bh_adjust, welch_test, Direction, Summary};
use crate::structure::ComplexityMetrics;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Columns with this prefix are excluded from content hashes.
const TIMING_PREFIX: &str = "wall_clock";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub task: String,
    pub method: Method,
    pub n: usize,
    pub n_failed: usize,
    pub fidelity_mean: f64,
    pub fidelity_std: f64,
    pub fidelity_median: f64,
    pub fidelity_best: f64,
    pub fidelity_stderr: f64,
    pub fidelity_ci95_lo: f64,
    pub fidelity_ci95_hi: f64,
    pub tv_mean: f64,
    pub tv_std: f64,
    pub bandwidth_excess_mean: f64,
    pub bandwidth_excess_std: f64,
    pub wall_clock_mean: f64,
    pub wall_clock_std: f64,
    pub objective_evals_mean: f64,
    pub objective_evals_std: f64,
    pub gradient_evals_mean: f64,
    pub gradient_evals_std: f64,
    /// Set when only one seed survived.
    pub single_sample: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub task: String,
    pub method: Method,
    pub n: usize,
    pub wall_clock_mean: f64,
    pub wall_clock_std: f64,
    pub objective_evals_mean: f64,
    pub objective_evals_std: f64,
    pub gradient_evals_mean: f64,
    pub gradient_evals_std: f64,
}

#[derive(Serialize)]
struct BenchmarkCsvRow<'a> {
    task: &'a str,
    method: Method,
    n: usize,
    n_failed: usize,
    fidelity_mean: f64,
    fidelity_std: f64,
    fidelity_median: f64,
    fidelity_best: f64,
    fidelity_stderr: f64,
    fidelity_ci95_lo: f64,
    fidelity_ci95_hi: f64,
    tv_mean: f64,
    tv_std: f64,
    bandwidth_excess_mean: f64,
    bandwidth_excess_std: f64,
    single_sample: bool,
}

fn group_by_cell(records: &[RunRecord]) -> BTreeMap<(String, Method), Vec<&RunRecord>> {
    let mut groups: BTreeMap<(String, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.task.clone(), r.method)).or_default().push(r);
    }
    for v in groups.values_mut() {
        v.sort_by_key(|r| r.seed);
    }
    groups
}

fn summarize(values: &[f64], direction: Direction) -> Result<Option<Summary>> {
    if values.is_empty() {
        Ok(None)
    } else {
        aggregate(values, direction).map(Some)
    }
}

/// Per `(task, method)` statistics over the surviving seeds.
pub fn aggregate_records(records: &[RunRecord]) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for ((task, method), group) in group_by_cell(records) {
        let ok: Vec<&RunRecord> = group.iter().copied().filter(|r| !r.failed()).collect();
        let pick = |f: &dyn Fn(&RunRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let fid = summarize(&pick(&|r| r.fidelity), Direction::HigherIsBetter)?;
        let tv = summarize(&pick(&|r| r.metrics.total_variation), Direction::LowerIsBetter)?;
        let bw = summarize(&pick(&|r| r.metrics.bandwidth_excess), Direction::LowerIsBetter)?;
        let wall = summarize(&pick(&|r| r.wall_clock_s), Direction::LowerIsBetter)?;
        let obj = summarize(&pick(&|r| r.objective_evals as f64), Direction::LowerIsBetter)?;
        let grad = summarize(&pick(&|r| r.gradient_evals as f64), Direction::LowerIsBetter)?;
        let get = |s: &Option<Summary>, f: fn(&Summary) -> f64| s.as_ref().map(f).unwrap_or(f64::NAN);
        rows.push(AggregateRow {
            n: ok.len(),
            n_failed: group.len() - ok.len(),
            fidelity_mean: get(&fid, |s| s.mean),
            fidelity_std: get(&fid, |s| s.std),
            fidelity_median: get(&fid, |s| s.median),
            fidelity_best: get(&fid, |s| s.best),
            fidelity_stderr: get(&fid, |s| s.stderr),
            fidelity_ci95_lo: get(&fid, |s| s.ci95_lo),
            fidelity_ci95_hi: get(&fid, |s| s.ci95_hi),
            tv_mean: get(&tv, |s| s.mean),
            tv_std: get(&tv, |s| s.std),
            bandwidth_excess_mean: get(&bw, |s| s.mean),
            bandwidth_excess_std: get(&bw, |s| s.std),
            wall_clock_mean: get(&wall, |s| s.mean),
            wall_clock_std: get(&wall, |s| s.std),
            objective_evals_mean: get(&obj, |s| s.mean),
            objective_evals_std: get(&obj, |s| s.std),
            gradient_evals_mean: get(&grad, |s| s.mean),
            gradient_evals_std: get(&grad, |s| s.std),
            single_sample: ok.len() == 1,
            task,
            method,
        });
    }
    Ok(rows)
}

pub fn efficiency_rows(aggregates: &[AggregateRow]) -> Vec<EfficiencyRow> {
    aggregates
        .iter()
        .map(|a| EfficiencyRow {
            task: a.task.clone(),
            method: a.method,
            n: a.n,
            wall_clock_mean: a.wall_clock_mean,
            wall_clock_std: a.wall_clock_std,
            objective_evals_mean: a.objective_evals_mean,
            objective_evals_std: a.objective_evals_std,
            gradient_evals_mean: a.gradient_evals_mean,
            gradient_evals_std: a.gradient_evals_std,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessRow {
    pub task: String,
    pub method: Method,
    /// `filtered` for post-processed baselines, `raw` for the reference.
    pub variant: String,
    pub n: usize,
    pub fidelity_mean: f64,
    pub fidelity_ci95_lo: f64,
    pub fidelity_ci95_hi: f64,
    pub tv_mean: f64,
    pub tv_ci95_lo: f64,
    pub tv_ci95_hi: f64,
    pub bandwidth_excess_mean: f64,
    pub bandwidth_excess_ci95_lo: f64,
    pub bandwidth_excess_ci95_hi: f64,
}

fn fairness_row(
    task: &str,
    method: Method,
    variant: &str,
    samples: &[(f64, ComplexityMetrics)],
) -> Result<FairnessRow> {
    let fid = aggregate(
        &samples.iter().map(|s| s.0).collect::<Vec<_>>(),
        Direction::HigherIsBetter,
    )?;
    let tv = aggregate(
        &samples.iter().map(|s| s.1.total_variation).collect::<Vec<_>>(),
        Direction::LowerIsBetter,
    )?;
    let bw = aggregate(
        &samples.iter().map(|s| s.1.bandwidth_excess).collect::<Vec<_>>(),
        Direction::LowerIsBetter,
    )?;
    Ok(FairnessRow {
        task: task.to_string(),
        method,
        variant: variant.to_string(),
        n: samples.len(),
        fidelity_mean: fid.mean,
        fidelity_ci95_lo: fid.ci95_lo,
        fidelity_ci95_hi: fid.ci95_hi,
        tv_mean: tv.mean,
        tv_ci95_lo: tv.ci95_lo,
        tv_ci95_hi: tv.ci95_hi,
        bandwidth_excess_mean: bw.mean,
        bandwidth_excess_ci95_lo: bw.ci95_lo,
        bandwidth_excess_ci95_hi: bw.ci95_hi,
    })
}

/// Filtered GRAPE and quasi-Newton fields next to the unfiltered
/// PADMM-Warm reference.
pub fn fairness_rows(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<Vec<FairnessRow>> {
    let mut rows = Vec::new();
    for ((task_name, method), group) in group_by_cell(records) {
        let ok: Vec<&RunRecord> = group.into_iter().filter(|r| !r.failed()).collect();
        if ok.is_empty() {
            continue;
        }
        match method {
            Method::Grape | Method::QuasiNewton => {
                let task = &cfg.task(&task_name)?.task;
                let cutoff = cfg.task(&task_name)?.padmm.cutoff;
                let samples = ok
                    .iter()
                    .map(|r| {
                        let u = filter_baseline(&r.final_field, task, cutoff)?;
                        let fid = crate::dynamics::fidelity(task, &u)?;
                        Ok((fid, ComplexityMetrics::of(&u, task.cutoff, task.dt)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(fairness_row(&task_name, method, "filtered", &samples)?);
            }
            Method::PadmmWarm => {
                let samples: Vec<_> = ok.iter().map(|r| (r.fidelity, r.metrics)).collect();
                rows.push(fairness_row(&task_name, method, "raw", &samples)?);
            }
            _ => {}
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub task: String,
    pub method: Method,
    pub family: PerturbationKind,
    /// Perturbation level, or `mean` for the family average.
    pub level: String,
    pub n: usize,
    pub mean_fidelity: f64,
}

pub fn robustness_rows(records: &[RunRecord]) -> Vec<RobustnessRow> {
    let mut rows = Vec::new();
    for ((task, method), group) in group_by_cell(records) {
        let reports: Vec<_> = group
            .iter()
            .filter(|r| !r.failed())
            .filter_map(|r| r.robustness.as_ref())
            .collect();
        if reports.is_empty() {
            continue;
        }
        let n = reports.len();
        let mean =
            |f: &dyn Fn(&crate::robust::RobustnessReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n as f64;
        let mut push = |family, level: String, value| {
            rows.push(RobustnessRow {
                task: task.clone(),
                method,
                family,
                level,
                n,
                mean_fidelity: value,
            })
        };
        for family in [
            PerturbationKind::Nominal,
            PerturbationKind::Detuning,
            PerturbationKind::Amplitude,
            PerturbationKind::Drift,
        ] {
            push(family, "mean".into(), mean(&|r| r.family(family)));
        }
        for (i, level) in reports[0].levels.iter().enumerate() {
            push(level.family, level.level.to_string(), mean(&|r| r.levels[i].fidelity));
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub comparison: String,
    pub task: String,
    pub n_a: usize,
    pub n_b: usize,
    pub delta_mean: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub hedges_g: f64,
    pub welch_p: f64,
    pub bh_q: f64,
    pub degenerate: bool,
}

type Metric<'a> = dyn Fn(&RunRecord) -> Option<f64> + 'a;

/// Warm-vs-cold fidelity and robust-vs-warm drift robustness on every task,
/// with Benjamini-Hochberg adjustment across all rows.
pub fn significance_rows(records: &[RunRecord]) -> Result<Vec<SignificanceRow>> {
    let groups = group_by_cell(records);
    let mut tasks: Vec<String> = groups.keys().map(|(t, _)| t.clone()).collect();
    tasks.dedup();
    let sample = |task: &str, m: Method, f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> {
        groups
            .get(&(task.to_string(), m))
            .map(|g| g.iter().filter(|r| !r.failed()).filter_map(|r| f(r)).collect())
            .unwrap_or_default()
    };
    let fidelity = |r: &RunRecord| Some(r.fidelity);
    let drift = |r: &RunRecord| r.robustness.as_ref().map(|x| x.drift);
    let mut rows = Vec::new();
    let comparisons: [(&str, Method, Method, &Metric); 2] = [
        ("padmm-warm - padmm", Method::PadmmWarm, Method::Padmm, &fidelity),
        (
            "padmm-warm-robust - padmm-warm drift",
            Method::PadmmWarmRobust,
            Method::PadmmWarm,
            &drift,
        ),
    ];
    for (label, ma, mb, f) in comparisons {
        for task in &tasks {
            let a = sample(task, ma, f);
            let b = sample(task, mb, f);
            let mut row = SignificanceRow {
                comparison: label.to_string(),
                task: task.clone(),
                n_a: a.len(),
                n_b: b.len(),
                delta_mean: f64::NAN,
                ci95_lo: f64::NAN,
                ci95_hi: f64::NAN,
                hedges_g: f64::NAN,
                welch_p: f64::NAN,
                bh_q: f64::NAN,
                degenerate: false,
            };
            if a.len() >= 2 && b.len() >= 2 {
                let w = welch_test(&a, &b)?;
                row.delta_mean = w.delta;
                row.ci95_lo = w.ci95_lo;
                row.ci95_hi = w.ci95_hi;
                row.hedges_g = w.hedges_g;
                row.welch_p = w.p;
                row.degenerate = w.degenerate;
            }
            rows.push(row);
        }
    }
    let tested: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].welch_p.is_finite()).collect();
    let q = bh_adjust(&tested.iter().map(|&i| rows[i].welch_p).collect::<Vec<_>>())?;
    for (k, &i) in tested.iter().enumerate() {
        rows[i].bh_q = q[k];
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-iteration residual diagnostics of a PADMM-family record.
pub fn write_residuals(dir: &Path, record: &RunRecord) -> Result<Option<PathBuf>> {
    let Some(trace) = &record.residual_trace else {
        return Ok(None);
    };
    let path = dir.join(format!(
        "residuals_{}_{}_{}.csv",
        record.task, record.method, record.seed
    ));
    write_csv(&path, trace)?;
    Ok(Some(path))
}

pub fn write_records_jsonl(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Config {
            path: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Every table derivable from stored records: benchmark, efficiency,
/// fairness, robustness, significance and residual traces.
pub fn write_report(cfg: &ExperimentConfig, records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let aggregates = aggregate_records(records)?;
    let mut written = Vec::new();
    let bench: Vec<BenchmarkCsvRow> = aggregates
        .iter()
        .map(|a| BenchmarkCsvRow {
            task: &a.task,
            method: a.method,
            n: a.n,
            n_failed: a.n_failed,
            fidelity_mean: a.fidelity_mean,
            fidelity_std: a.fidelity_std,
            fidelity_median: a.fidelity_median,
            fidelity_best: a.fidelity_best,
            fidelity_stderr: a.fidelity_stderr,
            fidelity_ci95_lo: a.fidelity_ci95_lo,
            fidelity_ci95_hi: a.fidelity_ci95_hi,
            tv_mean: a.tv_mean,
            tv_std: a.tv_std,
            bandwidth_excess_mean: a.bandwidth_excess_mean,
            bandwidth_excess_std: a.bandwidth_excess_std,
            single_sample: a.single_sample,
        })
        .collect();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = dir.join(name);
        f(&p)?;
        written.push(p);
        Ok(())
    };
    emit("benchmark.csv", &|p| write_csv(p, &bench))?;
    emit("efficiency.csv", &|p| write_csv(p, &efficiency_rows(&aggregates)))?;
    emit("fairness.csv", &|p| write_csv(p, &fairness_rows(cfg, records)?))?;
    emit("robustness.csv", &|p| write_csv(p, &robustness_rows(records)))?;
    emit("significance.csv", &|p| write_csv(p, &significance_rows(records)?))?;
    for r in records {
        if let Some(p) = write_residuals(dir, r)? {
            written.push(p);
        }
    }
    Ok(written)
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash with timing removed: wall-clock CSV columns are dropped and
/// record timings zeroed before hashing.
pub fn hash_artifact(path: &Path) -> Result<String> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name == RECORDS_FILE {
        let mut buf = Vec::new();
        for r in read_records_jsonl(path)? {
            serde_json::to_writer(&mut buf, &r.without_timing())?;
            buf.push(b'\n');
        }
        return Ok(hex_digest(&buf));
    }
    if path.extension().and_then(|e| e.to_str()) != Some("csv") {
        return Ok(hex_digest(&fs::read(path)?));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| !headers[i].starts_with(TIMING_PREFIX))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in reader.records() {
        let rec = rec?;
        w.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(hex_digest(&bytes))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    files: BTreeMap<String, String>,
}

/// Hashes every CSV and the record store in `dir` into `manifest.json`.
pub fn write_manifest(cfg: &ExperimentConfig, dir: &Path, command: &str) -> Result<PathBuf> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
            continue;
        };
        if name.ends_with(".csv") || name == RECORDS_FILE {
            files.insert(name, hash_artifact(&path)?);
        }
    }
    let manifest = Manifest {
        command,
        config: cfg,
        seeds: &cfg.seeds,
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
