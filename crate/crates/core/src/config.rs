//! Experiment configuration: built-in presets, JSON overrides merged on top,
//! strict validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{GrapeConfig, QuasiNewtonConfig};
use crate::dynamics::{GradientMode, TaskSpec};
use crate::error::{Error, Result};
use crate::padmm::PadmmConfig;
use crate::record::Method;
use crate::robust::{EnsembleLists, RobustnessGrid};
use crate::tasks;

/// Preset selecting all three built-in tasks.
pub const PRESET_ALL: &str = "all";

pub const DEFAULT_SEEDS: [u64; 10] = [3, 7, 11, 19, 23, 29, 31, 37, 41, 43];

/// Default step of the fixed-step gradient stages (GRAPE and warm start).
pub const DEFAULT_GRAPE_STEP: f64 = 0.5;

/// Task plus the per-method settings used on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task: TaskSpec,
    pub grape: GrapeConfig,
    pub quasi_newton: QuasiNewtonConfig,
    pub padmm: PadmmConfig,
    pub ensemble: EnsembleLists,
}

/// Multipliers applied to the task's PADMM settings, one run per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoGrid {
    pub lambda1_scales: Vec<f64>,
    pub lambda_tv_scales: Vec<f64>,
    pub cutoff_scales: Vec<f64>,
    pub eta_scales: Vec<f64>,
    pub method: Method,
    pub seed: u64,
}

impl Default for ParetoGrid {
    fn default() -> Self {
        Self {
            lambda1_scales: vec![0.0, 1.0, 10.0],
            lambda_tv_scales: vec![0.0, 1.0, 10.0, 100.0],
            cutoff_scales: vec![0.5, 1.0],
            eta_scales: vec![1.0, 2.0],
            method: Method::PadmmWarm,
            seed: DEFAULT_SEEDS[0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSettings {
    pub method: Method,
    pub seed: u64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            method: Method::Padmm,
            seed: DEFAULT_SEEDS[0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityGrid {
    pub rho_scales: Vec<f64>,
    pub eta_scales: Vec<f64>,
    pub inner_offsets: Vec<i64>,
    pub method: Method,
    pub seed: u64,
    /// Settings within this fidelity distance of an axis' best setting
    /// belong to its stability window.
    pub window_tol: f64,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        Self {
            rho_scales: vec![0.5, 1.0, 2.0],
            eta_scales: vec![0.75, 1.0, 1.25],
            inner_offsets: vec![-2, 0, 2],
            method: Method::PadmmWarm,
            seed: DEFAULT_SEEDS[0],
            window_tol: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub tasks: BTreeMap<String, TaskConfig>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads for independent runs; 0 picks the machine default.
    pub workers: usize,
    /// Gradient formula used by every method.
    pub gradient_mode: GradientMode,
    pub robustness: RobustnessGrid,
    pub pareto: ParetoGrid,
    pub ablation: AblationSettings,
    pub sensitivity: SensitivityGrid,
}

/// Per-task settings of the built-in presets.
pub fn preset_task_config(name: &str) -> Result<TaskConfig> {
    let task = tasks::preset_task(name)?;
    let padmm = |lambda1, lambda_tv, eta, inner_steps, outer_steps, warm_start_steps| PadmmConfig {
        lambda1,
        lambda_tv,
        rho1: 1.0,
        rho_tv: 1.0,
        rho_bw: 1.0,
        eta,
        inner_steps,
        outer_steps,
        cutoff: task.cutoff,
        warm_start_steps,
        warm_start_step: DEFAULT_GRAPE_STEP,
        warm_start_lambda_a: 0.0,
        gradient_mode: GradientMode::Exact,
    };
    let grape = |iterations, lambda_a| GrapeConfig {
        iterations,
        lambda_a,
        step: DEFAULT_GRAPE_STEP,
    };
    let (grape, quasi_newton, padmm) = match name {
        tasks::ONE_QUBIT => (grape(120, 0.25), 80, padmm(5e-4, 8e-4, 0.04, 6, 120, 25)),
        tasks::QUTRIT => (grape(180, 12.0), 120, padmm(1e-4, 1e-4, 0.05, 8, 220, 40)),
        tasks::TWO_QUBIT => (grape(80, 10.0), 60, padmm(1e-3, 1.2e-3, 0.03, 4, 80, 25)),
        other => return Err(crate::error::invalid(format!("unknown preset `{other}`"))),
    };
    Ok(TaskConfig {
        task,
        grape,
        quasi_newton: QuasiNewtonConfig::with_max_iters(quasi_newton),
        padmm,
        ensemble: EnsembleLists::default(),
    })
}

impl ExperimentConfig {
    /// Built-in configuration: one task by name, or all three with `"all"`.
    pub fn preset(name: &str) -> Result<Self> {
        let names: Vec<&str> = if name == PRESET_ALL {
            tasks::PRESET_NAMES.to_vec()
        } else {
            vec![name]
        };
        let tasks = names
            .iter()
            .map(|n| Ok((n.to_string(), preset_task_config(n)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            preset: name.to_string(),
            tasks,
            methods: Method::ALL.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            output_dir: PathBuf::from("results"),
            workers: 0,
            gradient_mode: GradientMode::Exact,
            robustness: RobustnessGrid::default(),
            pareto: ParetoGrid::default(),
            ablation: AblationSettings::default(),
            sensitivity: SensitivityGrid::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, message: String| Error::Config {
            path: path.to_string(),
            message,
        };
        if self.tasks.is_empty() {
            return Err(err("tasks", "at least one task is required".into()));
        }
        for (key, tc) in &self.tasks {
            let at = |field: &str| format!("tasks.{key}.{field}");
            if tc.task.name != *key {
                return Err(err(
                    &at("task.name"),
                    format!("`{}` does not match its key", tc.task.name),
                ));
            }
            tc.grape.validate().map_err(|e| err(&at("grape"), e.to_string()))?;
            tc.quasi_newton
                .validate()
                .map_err(|e| err(&at("quasi_newton"), e.to_string()))?;
            tc.padmm.validate().map_err(|e| err(&at("padmm"), e.to_string()))?;
            if tc.padmm.gradient_mode != self.gradient_mode {
                return Err(err(
                    &at("padmm.gradient_mode"),
                    format!("`{}` disagrees with gradient_mode", tc.padmm.gradient_mode),
                ));
            }
        }
        if self.seeds.is_empty() {
            return Err(err("seeds", "at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(err("seeds", "seeds must be distinct".into()));
        }
        if self.methods.is_empty() {
            return Err(err("methods", "at least one method is required".into()));
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return Err(err("methods", "methods must be distinct".into()));
        }
        for (path, m) in [
            ("pareto.method", self.pareto.method),
            ("sensitivity.method", self.sensitivity.method),
        ] {
            if !matches!(m, Method::Padmm | Method::PadmmWarm) {
                return Err(err(path, format!("`{m}` is not padmm or padmm-warm")));
            }
        }
        if !matches!(self.ablation.method, Method::Padmm | Method::PadmmWarm) {
            return Err(err(
                "ablation.method",
                format!("`{}` is not padmm or padmm-warm", self.ablation.method),
            ));
        }
        if !(self.sensitivity.window_tol >= 0.0) {
            return Err(err("sensitivity.window_tol", "must be >= 0".into()));
        }
        Ok(())
    }

    /// Applies one gradient mode to every method.
    pub fn set_gradient_mode(&mut self, mode: GradientMode) {
        self.gradient_mode = mode;
        for tc in self.tasks.values_mut() {
            tc.padmm.gradient_mode = mode;
        }
    }

    pub fn task(&self, name: &str) -> Result<&TaskConfig> {
        self.tasks.get(name).ok_or_else(|| Error::Config {
            path: "tasks".into(),
            message: format!("no task `{name}`"),
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Recursive object merge; anything that is not an object on both sides is
/// replaced by the override.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses config text: user values are merged over the preset they name
/// (default `"all"`), then deserialized strictly.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let user: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })?
    };
    let Value::Object(user_map) = &user else {
        return Err(Error::Config {
            path: origin.to_string(),
            message: "top level must be an object".into(),
        });
    };
    let preset_name = match user_map.get("preset") {
        None => PRESET_ALL.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(Error::Config {
                path: "preset".into(),
                message: format!("expected a string, got {other}"),
            })
        }
    };
    let mut preset = ExperimentConfig::preset(&preset_name).map_err(|e| Error::Config {
        path: "preset".into(),
        message: e.to_string(),
    })?;
    if let Some(mode) = user_map.get("gradient_mode") {
        let mode: GradientMode = serde_json::from_value(mode.clone()).map_err(|e| Error::Config {
            path: "gradient_mode".into(),
            message: e.to_string(),
        })?;
        preset.set_gradient_mode(mode);
    }
    let mut merged = serde_json::to_value(&preset)?;
    drop_stale_dt(&mut merged, &user);
    merge(&mut merged, user);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(merged).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// A preset `dt` would contradict a user-changed horizon or slice count.
fn drop_stale_dt(merged: &mut Value, user: &Value) {
    let Some(Value::Object(user_tasks)) = user.get("tasks") else {
        return;
    };
    for (name, block) in user_tasks {
        let Some(task) = block.get("task") else { continue };
        let reshaped = task.get("horizon").is_some() || task.get("slices").is_some();
        if reshaped && task.get("dt").is_none() {
            if let Some(Value::Object(t)) = merged.pointer_mut(&format!("/tasks/{name}/task")) {
                t.remove("dt");
            }
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    load_config(Some(path), None)
}

/// Config from an optional file and an optional preset name; the preset
/// argument takes precedence over a `preset` key inside the file.
pub fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    let (text, origin) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingInput(p.to_path_buf()),
                _ => Error::Io(e),
            })?,
            p.display().to_string(),
        ),
        None => (String::new(), "<defaults>".to_string()),
    };
    let Some(name) = preset else {
        return parse_config_str(&text, &origin);
    };
    let mut user: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config {
            path: origin.clone(),
            message: e.to_string(),
        })?
    };
    match &mut user {
        Value::Object(m) => {
            m.insert("preset".into(), Value::String(name.to_string()));
        }
        _ => {
            return Err(Error::Config {
                path: origin,
                message: "top level must be an object".into(),
            })
        }
    }
    parse_config_str(&user.to_string(), &origin)
}
