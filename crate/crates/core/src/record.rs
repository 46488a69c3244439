use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::TaskSpec;
use crate::error::{invalid, Error, Result};
use crate::field::ControlField;
use crate::padmm::ResidualRow;
use crate::robust::RobustnessReport;
use crate::structure::ComplexityMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grape,
    QuasiNewton,
    Padmm,
    PadmmWarm,
    PadmmWarmRobust,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Grape,
        Method::QuasiNewton,
        Method::Padmm,
        Method::PadmmWarm,
        Method::PadmmWarmRobust,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Grape => "grape",
            Method::QuasiNewton => "quasi-newton",
            Method::Padmm => "padmm",
            Method::PadmmWarm => "padmm-warm",
            Method::PadmmWarmRobust => "padmm-warm-robust",
        }
    }

    pub fn is_padmm_family(self) -> bool {
        matches!(self, Method::Padmm | Method::PadmmWarm | Method::PadmmWarmRobust)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown method `{s}`")))
    }
}

pub mod flags {
    pub const LINE_SEARCH_FAILURE: &str = "line-search-failure";
    pub const MAX_ITERATIONS: &str = "max-iterations";
    pub const RUN_FAILED: &str = "run-failed";
}

/// Everything one optimization run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub method: Method,
    pub seed: u64,
    pub final_field: ControlField,
    pub fidelity: f64,
    pub metrics: ComplexityMetrics,
    pub wall_clock_s: f64,
    pub objective_evals: u64,
    pub gradient_evals: u64,
    /// Nominal fidelity of the iterate entering each gradient step, then of
    /// the returned field.
    pub fidelity_trace: Vec<f64>,
    #[serde(default)]
    pub residual_trace: Option<Vec<ResidualRow>>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub robustness: Option<RobustnessReport>,
}

impl RunRecord {
    /// Copy with the wall-clock field zeroed, for content comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }

    /// Placeholder for a run that aborted; excluded from aggregates.
    pub fn failure(task: &TaskSpec, method: Method, seed: u64, message: &str) -> Self {
        let (m, n) = task.field_shape();
        let field = ControlField::zeros(m, n);
        Self {
            task: task.name.clone(),
            method,
            seed,
            metrics: ComplexityMetrics::of(&field, task.cutoff, task.dt),
            final_field: field,
            fidelity: 0.0,
            wall_clock_s: 0.0,
            objective_evals: 0,
            gradient_evals: 0,
            fidelity_trace: Vec::new(),
            residual_trace: None,
            flags: vec![flags::RUN_FAILED.to_string(), format!("error: {message}")],
            robustness: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.flags.iter().any(|f| f == flags::RUN_FAILED)
    }
}
