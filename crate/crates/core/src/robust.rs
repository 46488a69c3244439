//! Perturbation ensembles, the sample-average robust objective, robust
//! training, and post-training robustness evaluation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fidelity, fidelity_and_gradient, GradientMode, TaskSpec};
use crate::error::{invalid, Result};
use crate::field::ControlField;
use crate::objective::{Evaluation, SmoothObjective};
use crate::padmm::{run_padmm_with, PadmmConfig};
use crate::record::{Method, RunRecord};
use crate::rng::keyed_rng;
use crate::structure::bandlimit_project;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Nominal,
    Detuning,
    Amplitude,
    Drift,
}

impl PerturbationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Nominal => "nominal",
            PerturbationKind::Detuning => "detuning",
            PerturbationKind::Amplitude => "amplitude",
            PerturbationKind::Drift => "drift",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScenario {
    pub kind: PerturbationKind,
    /// Fractional scaling of the drift Hamiltonian.
    pub detune_frac: f64,
    /// Fractional scaling of every control amplitude.
    pub amp_err: f64,
    /// Additive control offset, in units of `u_max`.
    pub drift_strength: f64,
    /// Unit max-abs offset profile; present for drift scenarios.
    #[serde(default)]
    pub drift_shape: Option<ControlField>,
}

impl PerturbationScenario {
    pub fn nominal() -> Self {
        Self {
            kind: PerturbationKind::Nominal,
            detune_frac: 0.0,
            amp_err: 0.0,
            drift_strength: 0.0,
            drift_shape: None,
        }
    }

    pub fn detuning(frac: f64) -> Self {
        Self {
            kind: PerturbationKind::Detuning,
            detune_frac: frac,
            ..Self::nominal()
        }
    }

    pub fn amplitude(err: f64) -> Self {
        Self {
            kind: PerturbationKind::Amplitude,
            amp_err: err,
            ..Self::nominal()
        }
    }

    pub fn drift(strength: f64, shape: ControlField) -> Self {
        Self {
            kind: PerturbationKind::Drift,
            drift_strength: strength,
            drift_shape: Some(shape),
            ..Self::nominal()
        }
    }

    /// Perturbed task plus the affine map `u -> a u + b` applied to the field.
    fn transform(&self, task: &TaskSpec, u: &ControlField) -> (Option<TaskSpec>, f64, ControlField) {
        match self.kind {
            PerturbationKind::Nominal => (None, 1.0, u.clone()),
            PerturbationKind::Detuning => (Some(task.with_drift_scaled(1.0 + self.detune_frac)), 1.0, u.clone()),
            PerturbationKind::Amplitude => {
                let a = 1.0 + self.amp_err;
                (None, a, u.scale(a))
            }
            PerturbationKind::Drift => {
                let mut v = u.clone();
                if let Some(shape) = &self.drift_shape {
                    v.axpy(self.drift_strength * task.u_max, shape);
                }
                (None, 1.0, v)
            }
        }
    }
}

/// Lists from which a training ensemble is assembled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleLists {
    pub detuning_fractions: Vec<f64>,
    pub amplitude_errors: Vec<f64>,
    pub drift_strengths: Vec<f64>,
}

impl Default for EnsembleLists {
    fn default() -> Self {
        Self {
            detuning_fractions: vec![0.05],
            amplitude_errors: vec![-0.05, 0.05],
            drift_strengths: vec![0.02],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub scenarios: Vec<PerturbationScenario>,
}

impl EnsembleSpec {
    pub fn nominal_only() -> Self {
        Self {
            scenarios: vec![PerturbationScenario::nominal()],
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Uniform sample-average weights.
    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.len() as f64; self.len()]
    }

    pub fn validate(&self) -> Result<()> {
        let nominal = self
            .scenarios
            .iter()
            .filter(|s| s.kind == PerturbationKind::Nominal)
            .count();
        if nominal != 1 {
            return Err(invalid(format!(
                "ensemble needs exactly one nominal scenario, found {nominal}"
            )));
        }
        Ok(())
    }
}

/// Seeded smooth profile: uniform noise restricted to the two lowest
/// nonzero frequency bins, scaled to max-abs 1.
pub fn drift_profile(task: &TaskSpec, stream: &str, seed: u64) -> Result<ControlField> {
    let mut rng = keyed_rng(&task.name, stream, seed);
    let (m, n) = task.field_shape();
    let noise = ControlField::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let smooth = bandlimit_project(&noise, 2.0 / (n as f64 * task.dt), task.dt)?;
    let peak = smooth.max_abs();
    if peak == 0.0 {
        return Ok(ControlField::constant(m, n, 1.0));
    }
    Ok(smooth.scale(1.0 / peak))
}

/// `{nominal} + {+-f per detuning fraction} + {e per amplitude error} +
/// {drift per strength}`.
pub fn build_ensemble(task: &TaskSpec, lists: &EnsembleLists, seed: u64) -> Result<EnsembleSpec> {
    let mut scenarios = vec![PerturbationScenario::nominal()];
    for &f in &lists.detuning_fractions {
        scenarios.push(PerturbationScenario::detuning(f));
        scenarios.push(PerturbationScenario::detuning(-f));
    }
    for &e in &lists.amplitude_errors {
        scenarios.push(PerturbationScenario::amplitude(e));
    }
    for (i, &s) in lists.drift_strengths.iter().enumerate() {
        let shape = drift_profile(task, &format!("ensemble-drift-{i}"), seed)?;
        scenarios.push(PerturbationScenario::drift(s, shape));
    }
    Ok(EnsembleSpec { scenarios })
}

/// Gate fidelity of `u` under the scenario's modified dynamics.
pub fn perturbed_propagate(task: &TaskSpec, u: &ControlField, scenario: &PerturbationScenario) -> Result<f64> {
    let (perturbed, _, v) = scenario.transform(task, u);
    fidelity(perturbed.as_ref().unwrap_or(task), &v)
}

fn scenario_loss_and_gradient(
    task: &TaskSpec,
    u: &ControlField,
    scenario: &PerturbationScenario,
    mode: GradientMode,
) -> Result<(f64, ControlField)> {
    let (perturbed, a, v) = scenario.transform(task, u);
    let (fid, g) = fidelity_and_gradient(perturbed.as_ref().unwrap_or(task), &v, mode)?;
    // chain rule through u -> a u + b
    let g = if a == 1.0 { g } else { g.scale(a) };
    Ok((1.0 - fid, g))
}

/// Sample-average infidelity over the ensemble and its gradient.
pub fn robust_objective_and_gradient(
    task: &TaskSpec,
    u: &ControlField,
    ensemble: &EnsembleSpec,
    mode: GradientMode,
) -> Result<(f64, ControlField)> {
    let e = RobustObjective::new(task, ensemble, mode)?.evaluate(u)?;
    Ok((e.loss, e.gradient))
}

pub struct RobustObjective<'a> {
    task: &'a TaskSpec,
    ensemble: &'a EnsembleSpec,
    mode: GradientMode,
}

impl<'a> RobustObjective<'a> {
    pub fn new(task: &'a TaskSpec, ensemble: &'a EnsembleSpec, mode: GradientMode) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(invalid("ensemble must contain at least one scenario"));
        }
        Ok(Self { task, ensemble, mode })
    }
}

impl SmoothObjective for RobustObjective<'_> {
    fn evaluate(&self, u: &ControlField) -> Result<Evaluation> {
        // scenarios in parallel, reduced in index order
        let parts: Vec<(f64, ControlField)> = self
            .ensemble
            .scenarios
            .par_iter()
            .map(|s| scenario_loss_and_gradient(self.task, u, s, self.mode))
            .collect::<Result<_>>()?;
        let nominal = self
            .ensemble
            .scenarios
            .iter()
            .position(|s| s.kind == PerturbationKind::Nominal);
        let fid = match nominal {
            Some(i) => 1.0 - parts[i].0,
            None => fidelity(self.task, u)?,
        };
        let count = parts.len() as f64;
        let mut iter = parts.into_iter();
        let (mut loss, mut gradient) = iter.next().expect("non-empty ensemble");
        for (l, g) in iter {
            loss += l;
            gradient = gradient.add(&g);
        }
        if count != 1.0 {
            loss /= count;
            gradient = gradient.scale(1.0 / count);
        }
        Ok(Evaluation {
            loss,
            gradient,
            fidelity: fid,
        })
    }

    fn cost(&self) -> u64 {
        self.ensemble.len() as u64
    }
}

/// Warm-started structured training on the robust objective.
pub fn run_padmm_robust(task: &TaskSpec, cfg: &PadmmConfig, ensemble: &EnsembleSpec, seed: u64) -> Result<RunRecord> {
    ensemble.validate()?;
    let objective = RobustObjective::new(task, ensemble, cfg.gradient_mode)?;
    run_padmm_with(task, cfg, seed, &objective, Method::PadmmWarmRobust, true)
}

/// Levels used by [`evaluate_robustness`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessGrid {
    pub detuning_levels: Vec<f64>,
    pub amplitude_levels: Vec<f64>,
    pub drift_strengths: Vec<f64>,
    pub drift_shapes: usize,
}

impl Default for RobustnessGrid {
    fn default() -> Self {
        Self {
            detuning_levels: vec![-0.05, -0.02, 0.02, 0.05],
            amplitude_levels: vec![-0.05, -0.02, 0.02, 0.05],
            drift_strengths: vec![0.01, 0.02],
            drift_shapes: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub family: PerturbationKind,
    pub level: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub nominal: f64,
    pub detuning: f64,
    pub amplitude: f64,
    pub drift: f64,
    pub levels: Vec<LevelResult>,
}

impl RobustnessReport {
    pub fn family(&self, kind: PerturbationKind) -> f64 {
        match kind {
            PerturbationKind::Nominal => self.nominal,
            PerturbationKind::Detuning => self.detuning,
            PerturbationKind::Amplitude => self.amplitude,
            PerturbationKind::Drift => self.drift,
        }
    }
}

fn mean_or(values: &[f64], fallback: f64) -> f64 {
    if values.is_empty() {
        fallback
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean fidelity under each perturbation family over the configured grid.
/// Drift shapes come from a fixed evaluation stream, independent of any
/// training ensemble.
pub fn evaluate_robustness(u: &ControlField, task: &TaskSpec, grid: &RobustnessGrid) -> Result<RobustnessReport> {
    let nominal = fidelity(task, u)?;
    let mut levels = Vec::new();

    let mut detuning = Vec::new();
    for &l in &grid.detuning_levels {
        let f = perturbed_propagate(task, u, &PerturbationScenario::detuning(l))?;
        detuning.push(f);
        levels.push(LevelResult {
            family: PerturbationKind::Detuning,
            level: l,
            fidelity: f,
        });
    }

    let mut amplitude = Vec::new();
    for &l in &grid.amplitude_levels {
        let f = perturbed_propagate(task, u, &PerturbationScenario::amplitude(l))?;
        amplitude.push(f);
        levels.push(LevelResult {
            family: PerturbationKind::Amplitude,
            level: l,
            fidelity: f,
        });
    }

    let shapes = (0..grid.drift_shapes as u64)
        .map(|i| drift_profile(task, "robustness-eval", i))
        .collect::<Result<Vec<_>>>()?;
    let mut drift = Vec::new();
    for &s in &grid.drift_strengths {
        let mut per_level = Vec::new();
        for shape in &shapes {
            per_level.push(perturbed_propagate(
                task,
                u,
                &PerturbationScenario::drift(s, shape.clone()),
            )?);
        }
        let f = mean_or(&per_level, nominal);
        drift.extend(per_level);
        levels.push(LevelResult {
            family: PerturbationKind::Drift,
            level: s,
            fidelity: f,
        });
    }

    Ok(RobustnessReport {
        nominal,
        detuning: mean_or(&detuning, nominal),
        amplitude: mean_or(&amplitude, nominal),
        drift: mean_or(&drift, nominal),
        levels,
    })
}
