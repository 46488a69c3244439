use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{GradientMode, TaskSpec};
use crate::error::{invalid, Error, Result};
use crate::field::ControlField;
use crate::objective::{Counters, Infidelity, SmoothObjective};
use crate::record::{Method, RunRecord};
use crate::rng::initial_field;
use crate::structure::{box_project, ComplexityMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrapeConfig {
    pub iterations: usize,
    /// Weight of the mean-square amplitude penalty `lambda_a * mean(u^2)`.
    pub lambda_a: f64,
    pub step: f64,
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(invalid("grape.iterations must be >= 1"));
        }
        if !(self.lambda_a >= 0.0) {
            return Err(invalid("grape.lambda_a must be >= 0"));
        }
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(invalid("grape.step must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `u <- clamp(u - step * g)`.
pub(crate) fn projected_step(u: &ControlField, g: &ControlField, step: f64, u_max: f64) -> ControlField {
    u.zip_map(g, |x, d| (x - step * d).clamp(-u_max, u_max))
}

/// Fixed-budget projected gradient descent on `J(u) + lambda_a mean(u^2)`.
///
/// Every iteration counts one gradient and two objective evaluations; the
/// terminal evaluation adds one more objective evaluation.
pub fn grape_descent(
    objective: &dyn SmoothObjective,
    u0: ControlField,
    cfg: &GrapeConfig,
    iterations: usize,
    u_max: f64,
    counters: &mut Counters,
    fidelity_trace: &mut Vec<f64>,
) -> Result<ControlField> {
    let mut u = u0;
    let size = u.as_slice().len() as f64;
    let penalty = cfg.lambda_a * 2.0 / size;
    for it in 0..iterations {
        let eval = objective.evaluate(&u)?;
        fidelity_trace.push(eval.fidelity);
        let mut grad = eval.gradient;
        if cfg.lambda_a != 0.0 {
            grad.axpy(penalty, &u);
        }
        u = projected_step(&u, &grad, cfg.step, u_max);
        if !u.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                block: "u".into(),
            });
        }
        counters.add(2 * objective.cost(), objective.cost());
    }
    counters.add(objective.cost(), 0);
    Ok(u)
}

pub fn run_grape(task: &TaskSpec, cfg: &GrapeConfig, seed: u64, mode: GradientMode) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let objective = Infidelity::new(task, mode);
    let mut counters = Counters::default();
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let u0 = box_project(&initial_field(task, seed), task.u_max);
    let u = grape_descent(
        &objective,
        u0,
        cfg,
        cfg.iterations,
        task.u_max,
        &mut counters,
        &mut trace,
    )?;
    let fid = objective.fidelity(&u)?;
    trace.push(fid);
    Ok(RunRecord {
        task: task.name.clone(),
        method: Method::Grape,
        seed,
        metrics: ComplexityMetrics::of(&u, task.cutoff, task.dt),
        final_field: u,
        fidelity: fid,
        wall_clock_s: start.elapsed().as_secs_f64(),
        objective_evals: counters.objective,
        gradient_evals: counters.gradient,
        fidelity_trace: trace,
        residual_trace: None,
        flags: Vec::new(),
        robustness: None,
    })
}
