//! Inexact proximal ADMM for structured pulse synthesis.
//!
//! The control is split three ways, `z1 = u` (sparsity), `z2 = Du` (total
//! variation) and `z3 = u` (band limit), with scaled duals `y1, y2, y3`.
//! Each outer round takes a fixed number of projected gradient steps on the
//! augmented Lagrangian in `u`, then updates the auxiliary blocks in closed
//! form and adds the constraint gaps to the duals.
//!
//! A block whose structural term is switched off (zero weight, or a cutoff
//! at or above Nyquist) is dropped from the splitting altogether, so with
//! every block off the solver is plain projected gradient descent.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{grape_descent, GrapeConfig};
use crate::dynamics::{GradientMode, TaskSpec};
use crate::error::{invalid, Error, Result};
use crate::field::ControlField;
use crate::objective::{Counters, Infidelity, SmoothObjective};
use crate::record::{Method, RunRecord};
use crate::rng::initial_field;
use crate::structure::{
    band_mask, bandlimit_project, box_project, diff_adjoint, diff_forward, soft_threshold, ComplexityMetrics,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PadmmConfig {
    pub lambda1: f64,
    pub lambda_tv: f64,
    pub rho1: f64,
    pub rho_tv: f64,
    pub rho_bw: f64,
    /// Inner projected-gradient step size.
    pub eta: f64,
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub cutoff: f64,
    /// GRAPE iterations run before the structured updates (0 disables).
    pub warm_start_steps: usize,
    /// Step size of the warm-start GRAPE stage.
    pub warm_start_step: f64,
    /// Amplitude penalty of the warm-start GRAPE stage.
    #[serde(default)]
    pub warm_start_lambda_a: f64,
    #[serde(default)]
    pub gradient_mode: GradientMode,
}

impl PadmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda_tv >= 0.0 && self.warm_start_lambda_a >= 0.0) {
            return Err(invalid("padmm weights must be >= 0"));
        }
        if !(self.rho1 > 0.0 && self.rho_tv > 0.0 && self.rho_bw > 0.0) {
            return Err(invalid("padmm penalties rho must be > 0"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("padmm.eta must be finite and >= 0"));
        }
        if self.inner_steps < 1 || self.outer_steps < 1 {
            return Err(invalid("padmm inner_steps and outer_steps must be >= 1"));
        }
        if !(self.cutoff > 0.0) {
            return Err(invalid("padmm.cutoff must be > 0"));
        }
        if !(self.warm_start_step >= 0.0 && self.warm_start_step.is_finite()) {
            return Err(invalid("padmm.warm_start_step must be finite and >= 0"));
        }
        Ok(())
    }

    /// Which of the (sparsity, variation, band) blocks take part.
    pub fn active_blocks(&self, task: &TaskSpec) -> [bool; 3] {
        let band = band_mask(task.slices, self.cutoff, task.dt).iter().any(|&keep| !keep);
        [self.lambda1 > 0.0, self.lambda_tv > 0.0, band]
    }

    pub fn rhos(&self) -> [f64; 3] {
        [self.rho1, self.rho_tv, self.rho_bw]
    }

    fn warm_grape(&self) -> GrapeConfig {
        GrapeConfig {
            iterations: self.warm_start_steps.max(1),
            lambda_a: self.warm_start_lambda_a,
            step: self.warm_start_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitState {
    pub u: ControlField,
    pub z1: ControlField,
    pub z2: ControlField,
    pub z3: ControlField,
    pub y1: ControlField,
    pub y2: ControlField,
    pub y3: ControlField,
}

impl SplitState {
    /// Auxiliary blocks at the images of `u`, duals at zero.
    pub fn new(u: ControlField, cfg: &PadmmConfig, task: &TaskSpec) -> Result<Self> {
        u.ensure_shape("control field", task.field_shape())?;
        let du = diff_forward(&u)?;
        let z3 = if cfg.active_blocks(task)[2] {
            bandlimit_project(&u, cfg.cutoff, task.dt)?
        } else {
            u.clone()
        };
        let (m, n) = u.shape();
        Ok(Self {
            z1: u.clone(),
            y1: ControlField::zeros(m, n),
            y2: ControlField::zeros(m, n - 1),
            y3: ControlField::zeros(m, n),
            z2: du,
            z3,
            u,
        })
    }

    fn check_shapes(&self, task: &TaskSpec) -> Result<()> {
        let (m, n) = task.field_shape();
        self.u.ensure_shape("u", (m, n))?;
        self.z1.ensure_shape("z1", (m, n))?;
        self.z3.ensure_shape("z3", (m, n))?;
        self.y1.ensure_shape("y1", (m, n))?;
        self.y3.ensure_shape("y3", (m, n))?;
        self.z2.ensure_shape("z2", (m, n - 1))?;
        self.y2.ensure_shape("y2", (m, n - 1))?;
        Ok(())
    }

    fn check_finite(&self, iteration: usize) -> Result<()> {
        let blocks = [
            ("u", &self.u),
            ("z1", &self.z1),
            ("z2", &self.z2),
            ("z3", &self.z3),
            ("y1", &self.y1),
            ("y2", &self.y2),
            ("y3", &self.y3),
        ];
        for (name, b) in blocks {
            if !b.is_finite() {
                return Err(Error::NonFinite {
                    iteration,
                    block: name.into(),
                });
            }
        }
        Ok(())
    }
}

/// One row of the per-outer-iteration diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub violation: f64,
    pub fidelity: f64,
}

/// `grad J + rho1 (u - z1 + y1) + rho2 D^T (Du - z2 + y2) + rho3 (u - z3 + y3)`
/// over the active blocks.
pub fn augmented_gradient(
    task: &TaskSpec,
    state: &SplitState,
    cfg: &PadmmConfig,
    grad_fid: &ControlField,
) -> Result<ControlField> {
    state.check_shapes(task)?;
    grad_fid.ensure_shape("fidelity gradient", task.field_shape())?;
    let active = cfg.active_blocks(task);
    let mut g = grad_fid.clone();
    if active[0] {
        let gap = state.u.sub(&state.z1).add(&state.y1);
        g.axpy(cfg.rho1, &gap);
    }
    if active[1] {
        let gap = diff_forward(&state.u)?.sub(&state.z2).add(&state.y2);
        g.axpy(cfg.rho_tv, &diff_adjoint(&gap)?);
    }
    if active[2] {
        let gap = state.u.sub(&state.z3).add(&state.y3);
        g.axpy(cfg.rho_bw, &gap);
    }
    Ok(g)
}

/// Smooth part of the augmented Lagrangian (the constant dual-norm term is
/// left out).
pub fn augmented_lagrangian_smooth(
    task: &TaskSpec,
    state: &SplitState,
    cfg: &PadmmConfig,
    infidelity: f64,
) -> Result<f64> {
    let active = cfg.active_blocks(task);
    let mut l = infidelity;
    if active[0] {
        l += 0.5
            * cfg.rho1
            * state
                .u
                .sub(&state.z1)
                .add(&state.y1)
                .dot(&state.u.sub(&state.z1).add(&state.y1));
    }
    if active[1] {
        let gap = diff_forward(&state.u)?.sub(&state.z2).add(&state.y2);
        l += 0.5 * cfg.rho_tv * gap.dot(&gap);
    }
    if active[2] {
        let gap = state.u.sub(&state.z3).add(&state.y3);
        l += 0.5 * cfg.rho_bw * gap.dot(&gap);
    }
    Ok(l)
}

/// `inner_steps` projected gradient steps on the augmented Lagrangian.
pub fn inner_u_update(
    task: &TaskSpec,
    state: &mut SplitState,
    cfg: &PadmmConfig,
    objective: &dyn SmoothObjective,
    counters: &mut Counters,
    fidelity_trace: &mut Vec<f64>,
) -> Result<()> {
    for _ in 0..cfg.inner_steps {
        let eval = objective.evaluate(&state.u)?;
        fidelity_trace.push(eval.fidelity);
        let g = augmented_gradient(task, state, cfg, &eval.gradient)?;
        state.u = state
            .u
            .zip_map(&g, |x, d| (x - cfg.eta * d).clamp(-task.u_max, task.u_max));
        counters.add(objective.cost(), objective.cost());
    }
    Ok(())
}

/// Proximal z-updates followed by the scaled dual updates. Returns the
/// previous auxiliary blocks for residual bookkeeping.
pub fn outer_update(task: &TaskSpec, state: &mut SplitState, cfg: &PadmmConfig) -> Result<[ControlField; 3]> {
    state.check_shapes(task)?;
    let active = cfg.active_blocks(task);
    let du = diff_forward(&state.u)?;
    let old = [state.z1.clone(), state.z2.clone(), state.z3.clone()];

    state.z1 = if active[0] {
        soft_threshold(&state.u.add(&state.y1), cfg.lambda1 / cfg.rho1)?
    } else {
        state.u.clone()
    };
    state.z2 = if active[1] {
        soft_threshold(&du.add(&state.y2), cfg.lambda_tv / cfg.rho_tv)?
    } else {
        du.clone()
    };
    state.z3 = if active[2] {
        bandlimit_project(&state.u.add(&state.y3), cfg.cutoff, task.dt)?
    } else {
        state.u.clone()
    };

    if active[0] {
        state.y1 = state.y1.add(&state.u.sub(&state.z1));
    }
    if active[1] {
        state.y2 = state.y2.add(&du.sub(&state.z2));
    }
    if active[2] {
        state.y3 = state.y3.add(&state.u.sub(&state.z3));
    }
    Ok(old)
}

fn residuals(
    task: &TaskSpec,
    state: &SplitState,
    cfg: &PadmmConfig,
    old: &[ControlField; 3],
) -> Result<(f64, f64, f64)> {
    let active = cfg.active_blocks(task);
    let du = diff_forward(&state.u)?;
    let gaps = [state.u.sub(&state.z1), du.sub(&state.z2), state.u.sub(&state.z3)];
    let new = [&state.z1, &state.z2, &state.z3];
    let rhos = cfg.rhos();
    let (mut primal, mut dual, mut violation) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..3 {
        if !active[j] {
            continue;
        }
        primal = primal.max(gaps[j].norm2());
        violation = violation.max(gaps[j].max_abs());
        dual = dual.max(rhos[j] * new[j].sub(&old[j]).norm2());
    }
    Ok((primal, dual, violation))
}

/// Outcome of the structured stage, before it is wrapped in a record.
pub struct PadmmOutcome {
    pub state: SplitState,
    pub residuals: Vec<ResidualRow>,
    pub fidelity: f64,
}

/// Alternates inner and outer updates for `cfg.outer_steps` rounds from `u0`.
pub fn padmm_loop(
    task: &TaskSpec,
    cfg: &PadmmConfig,
    objective: &dyn SmoothObjective,
    u0: ControlField,
    counters: &mut Counters,
    fidelity_trace: &mut Vec<f64>,
) -> Result<PadmmOutcome> {
    cfg.validate()?;
    let nominal = Infidelity::new(task, cfg.gradient_mode);
    let mut state = SplitState::new(u0, cfg, task)?;
    let mut rows = Vec::with_capacity(cfg.outer_steps);
    let mut fid = nominal.fidelity(&state.u)?;
    for r in 0..cfg.outer_steps {
        inner_u_update(task, &mut state, cfg, objective, counters, fidelity_trace)?;
        state.check_finite(r)?;
        let old = outer_update(task, &mut state, cfg)?;
        state.check_finite(r)?;
        let (primal, dual, violation) = residuals(task, &state, cfg, &old)?;
        fid = nominal.fidelity(&state.u)?;
        counters.add(objective.cost(), 0);
        rows.push(ResidualRow {
            iteration: r + 1,
            primal,
            dual,
            violation,
            fidelity: fid,
        });
    }
    state.u = box_project(&state.u, task.u_max);
    fidelity_trace.push(fid);
    Ok(PadmmOutcome {
        state,
        residuals: rows,
        fidelity: fid,
    })
}

/// Warm start (if configured) followed by the structured loop, with
/// `objective` as the smooth term inside the inner updates.
pub fn run_padmm_with(
    task: &TaskSpec,
    cfg: &PadmmConfig,
    seed: u64,
    objective: &dyn SmoothObjective,
    method: Method,
    warm: bool,
) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let mut counters = Counters::default();
    let mut trace = Vec::new();
    let mut u0 = box_project(&initial_field(task, seed), task.u_max);
    if warm && cfg.warm_start_steps > 0 {
        let nominal = Infidelity::new(task, cfg.gradient_mode);
        u0 = grape_descent(
            &nominal,
            u0,
            &cfg.warm_grape(),
            cfg.warm_start_steps,
            task.u_max,
            &mut counters,
            &mut trace,
        )?;
    }
    let out = padmm_loop(task, cfg, objective, u0, &mut counters, &mut trace)?;
    let u = out.state.u;
    Ok(RunRecord {
        task: task.name.clone(),
        method,
        seed,
        metrics: ComplexityMetrics::of(&u, task.cutoff, task.dt),
        final_field: u,
        fidelity: out.fidelity,
        wall_clock_s: start.elapsed().as_secs_f64(),
        objective_evals: counters.objective,
        gradient_evals: counters.gradient,
        fidelity_trace: trace,
        residual_trace: Some(out.residuals),
        flags: Vec::new(),
        robustness: None,
    })
}

pub fn run_padmm(task: &TaskSpec, cfg: &PadmmConfig, seed: u64) -> Result<RunRecord> {
    let objective = Infidelity::new(task, cfg.gradient_mode);
    run_padmm_with(task, cfg, seed, &objective, Method::Padmm, false)
}

pub fn run_padmm_warm(task: &TaskSpec, cfg: &PadmmConfig, seed: u64) -> Result<RunRecord> {
    let objective = Infidelity::new(task, cfg.gradient_mode);
    run_padmm_with(task, cfg, seed, &objective, Method::PadmmWarm, true)
}
