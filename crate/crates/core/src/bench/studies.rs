use rayon::prelude::*;
use serde::Serialize;

use super::{run_method, worker_pool};
use crate::config::{ExperimentConfig, TaskConfig};
use crate::error::{invalid, Result};
use crate::padmm::PadmmConfig;
use crate::pareto::{dominates, mark_front, ParetoPoint};
use crate::record::{Method, RunRecord};

fn final_violation(rec: &RunRecord) -> f64 {
    rec.residual_trace
        .as_ref()
        .and_then(|t| t.last())
        .map(|r| r.violation)
        .unwrap_or(0.0)
}

fn with_padmm(tc: &TaskConfig, padmm: PadmmConfig) -> TaskConfig {
    TaskConfig { padmm, ..tc.clone() }
}

fn run_variants(cfg: &ExperimentConfig, variants: &[(TaskConfig, Method, u64)]) -> Result<Vec<RunRecord>> {
    worker_pool(cfg.workers)?.install(|| {
        variants
            .par_iter()
            .map(|(tc, m, s)| run_method(cfg, tc, *m, *s))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoRow {
    pub task: String,
    /// `scan` for PADMM grid cells, otherwise the baseline method.
    pub kind: String,
    pub config_id: String,
    pub lambda1: f64,
    pub lambda_tv: f64,
    pub cutoff: f64,
    pub eta: f64,
    pub fidelity: f64,
    pub total_variation: f64,
    pub bandwidth_excess: f64,
    pub dominated: bool,
}

/// One PADMM run per grid cell at the scan seed, with GRAPE and
/// quasi-Newton points overlaid. The front is taken over scanned cells;
/// a baseline is marked dominated when some cell dominates it.
pub fn run_pareto_scan(cfg: &ExperimentConfig, task: &str) -> Result<Vec<ParetoRow>> {
    let tc = cfg.task(task)?;
    let g = &cfg.pareto;
    let mut cells = Vec::new();
    for &a in &g.lambda1_scales {
        for &b in &g.lambda_tv_scales {
            for &c in &g.cutoff_scales {
                for &e in &g.eta_scales {
                    let mut p = tc.padmm;
                    p.lambda1 *= a;
                    p.lambda_tv *= b;
                    p.cutoff *= c;
                    p.eta *= e;
                    cells.push((format!("l1x{a}-tvx{b}-wcx{c}-etax{e}"), p));
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(invalid("pareto grid is empty"));
    }
    let variants: Vec<_> = cells
        .iter()
        .map(|(_, p)| (with_padmm(tc, *p), g.method, g.seed))
        .chain([
            (tc.clone(), Method::Grape, g.seed),
            (tc.clone(), Method::QuasiNewton, g.seed),
        ])
        .collect();
    let records: Vec<Result<RunRecord>> = worker_pool(cfg.workers)?.install(|| {
        variants
            .par_iter()
            .map(|(t, m, s)| run_method(cfg, t, *m, *s))
            .collect()
    });

    let mut rows = Vec::new();
    let mut scan_points = Vec::new();
    for (i, rec) in records.into_iter().enumerate() {
        let (tcv, method, _) = &variants[i];
        let (kind, id) = if i < cells.len() {
            ("scan".to_string(), cells[i].0.clone())
        } else {
            (method.to_string(), method.to_string())
        };
        let (fid, tv, bw) = match rec {
            Ok(r) => (r.fidelity, r.metrics.total_variation, r.metrics.bandwidth_excess),
            Err(e) => {
                log::warn!("pareto cell {id} failed: {e}");
                continue;
            }
        };
        let p = &tcv.padmm;
        rows.push(ParetoRow {
            task: task.to_string(),
            kind,
            config_id: id.clone(),
            lambda1: p.lambda1,
            lambda_tv: p.lambda_tv,
            cutoff: p.cutoff,
            eta: p.eta,
            fidelity: fid,
            total_variation: tv,
            bandwidth_excess: bw,
            dominated: false,
        });
        if i < cells.len() {
            scan_points.push(ParetoPoint {
                config_id: id,
                fidelity: fid,
                complexity: tv,
                dominated: false,
            });
        }
    }
    mark_front(&mut scan_points)?;
    let mut k = 0;
    for row in rows.iter_mut() {
        if row.kind == "scan" {
            row.dominated = scan_points[k].dominated;
            k += 1;
        } else {
            let me = (row.fidelity, row.total_variation);
            row.dominated = scan_points.iter().any(|p| dominates((p.fidelity, p.complexity), me));
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub task: String,
    pub variant: String,
    pub lambda1: f64,
    pub lambda_tv: f64,
    pub cutoff: f64,
    pub fidelity: f64,
    pub bandwidth_excess: f64,
    pub total_variation: f64,
    pub final_violation: f64,
}

pub const ABLATION_VARIANTS: [&str; 5] = ["full", "l1-only", "tv-only", "bandlimit-only", "no-constraints"];

/// Switches structural terms off: a zero weight drops its block, a cutoff
/// at Nyquist drops the band block.
pub fn ablation_config(tc: &TaskConfig, variant: &str) -> Result<PadmmConfig> {
    let mut p = tc.padmm;
    let nyquist = tc.task.nyquist();
    match variant {
        "full" => {}
        "l1-only" => {
            p.lambda_tv = 0.0;
            p.cutoff = nyquist;
        }
        "tv-only" => {
            p.lambda1 = 0.0;
            p.cutoff = nyquist;
        }
        "bandlimit-only" => {
            p.lambda1 = 0.0;
            p.lambda_tv = 0.0;
        }
        "no-constraints" => {
            p.lambda1 = 0.0;
            p.lambda_tv = 0.0;
            p.cutoff = nyquist;
        }
        other => return Err(invalid(format!("unknown ablation variant `{other}`"))),
    }
    Ok(p)
}

pub fn run_ablation(cfg: &ExperimentConfig, task: &str) -> Result<Vec<AblationRow>> {
    let tc = cfg.task(task)?;
    let s = &cfg.ablation;
    let variants = ABLATION_VARIANTS
        .iter()
        .map(|v| Ok((with_padmm(tc, ablation_config(tc, v)?), s.method, s.seed)))
        .collect::<Result<Vec<_>>>()?;
    let records = run_variants(cfg, &variants)?;
    Ok(ABLATION_VARIANTS
        .iter()
        .zip(records)
        .zip(&variants)
        .map(|((v, r), (t, _, _))| AblationRow {
            task: task.to_string(),
            variant: v.to_string(),
            lambda1: t.padmm.lambda1,
            lambda_tv: t.padmm.lambda_tv,
            cutoff: t.padmm.cutoff,
            fidelity: r.fidelity,
            bandwidth_excess: r.metrics.bandwidth_excess,
            total_variation: r.metrics.total_variation,
            final_violation: final_violation(&r),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub task: String,
    pub axis: String,
    pub setting: String,
    pub value: f64,
    pub fidelity: f64,
    pub bandwidth_excess: f64,
    pub total_variation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    pub task: String,
    pub axis: String,
    pub best_setting: String,
    pub best_fidelity: f64,
    /// Settings within the tolerance of the best, `;`-separated.
    pub window: String,
}

/// One-axis-at-a-time perturbations of the task's PADMM settings.
pub fn run_sensitivity(cfg: &ExperimentConfig, task: &str) -> Result<Vec<SensitivityRow>> {
    let tc = cfg.task(task)?;
    let g = &cfg.sensitivity;
    let base = tc.padmm;
    let mut cells: Vec<(String, String, f64, PadmmConfig)> = Vec::new();
    for &s in &g.rho_scales {
        let mut p = base;
        p.rho1 *= s;
        p.rho_tv *= s;
        p.rho_bw *= s;
        cells.push(("rho-scale".into(), format!("rho_scale={s}"), s, p));
    }
    for &s in &g.eta_scales {
        let mut p = base;
        p.eta *= s;
        cells.push(("learning-rate".into(), format!("learning_rate={:.4}", p.eta), p.eta, p));
    }
    for &o in &g.inner_offsets {
        let inner = base.inner_steps as i64 + o;
        if inner < 1 {
            continue;
        }
        let mut p = base;
        p.inner_steps = inner as usize;
        cells.push(("inner-steps".into(), format!("inner_steps={inner}"), inner as f64, p));
    }
    let variants: Vec<_> = cells.iter().map(|c| (with_padmm(tc, c.3), g.method, g.seed)).collect();
    let records = run_variants(cfg, &variants)?;
    Ok(cells
        .into_iter()
        .zip(records)
        .map(|((axis, setting, value, _), r)| SensitivityRow {
            task: task.to_string(),
            axis,
            setting,
            value,
            fidelity: r.fidelity,
            bandwidth_excess: r.metrics.bandwidth_excess,
            total_variation: r.metrics.total_variation,
        })
        .collect())
}

/// Per axis: the best-fidelity setting and every setting within `tol` of it.
pub fn stability_windows(rows: &[SensitivityRow], tol: f64) -> Vec<StabilityRow> {
    let mut out: Vec<StabilityRow> = Vec::new();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.task.clone(), r.axis.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (task, axis) in keys {
        let group: Vec<&SensitivityRow> = rows.iter().filter(|r| r.task == task && r.axis == axis).collect();
        let best = group
            .iter()
            .copied()
            .reduce(|a, b| if b.fidelity > a.fidelity { b } else { a })
            .expect("non-empty group");
        let window: Vec<&str> = group
            .iter()
            .filter(|r| r.fidelity >= best.fidelity - tol)
            .map(|r| r.setting.as_str())
            .collect();
        out.push(StabilityRow {
            task,
            axis,
            best_setting: best.setting.clone(),
            best_fidelity: best.fidelity,
            window: window.join(";"),
        });
    }
    out
}
