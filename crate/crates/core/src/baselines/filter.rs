use serde::{Deserialize, Serialize};

use crate::dynamics::TaskSpec;
use crate::error::Result;
use crate::field::ControlField;
use crate::structure::{bandlimit_project, box_project};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingKernel {
    None,
    /// One pass of a centered 3-point average; the edge sample is mirrored
    /// (`x[-1] = x[0]`, `x[N] = x[N-1]`).
    #[default]
    MovingAverage3,
}

impl SmoothingKernel {
    pub fn apply(self, u: &ControlField) -> ControlField {
        match self {
            SmoothingKernel::None => u.clone(),
            SmoothingKernel::MovingAverage3 => {
                let (m, n) = u.shape();
                ControlField::from_fn(m, n, |c, k| {
                    let row = u.row(c);
                    let left = row[k.saturating_sub(1)];
                    let right = row[(k + 1).min(n - 1)];
                    (left + row[k] + right) / 3.0
                })
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterStages {
    pub band_limited: ControlField,
    pub boxed: ControlField,
    pub smoothed: ControlField,
}

pub fn filter_stages(u: &ControlField, task: &TaskSpec, cutoff: f64, kernel: SmoothingKernel) -> Result<FilterStages> {
    u.ensure_shape("filtered field", task.field_shape())?;
    let band_limited = bandlimit_project(u, cutoff, task.dt)?;
    let boxed = box_project(&band_limited, task.u_max);
    let smoothed = kernel.apply(&boxed);
    Ok(FilterStages {
        band_limited,
        boxed,
        smoothed,
    })
}

/// Band-limit projection, then box projection, then mild smoothing.
pub fn filter_baseline(u: &ControlField, task: &TaskSpec, cutoff: f64) -> Result<ControlField> {
    Ok(filter_stages(u, task, cutoff, SmoothingKernel::default())?.smoothed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::initial_field;
    use crate::structure::bandwidth_excess;
    use crate::tasks;

    #[test]
    fn constant_in_box_field_is_fixed_point() {
        let task = tasks::qutrit_x();
        let u = ControlField::constant(2, 60, 0.7);
        let out = filter_baseline(&u, &task, task.cutoff).unwrap();
        assert!(out.sub(&u).max_abs() < 1e-14);
    }

    #[test]
    fn first_stage_is_band_feasible() {
        let task = tasks::two_qubit_entangler();
        let u = initial_field(&task, 3).scale(300.0);
        let stages = filter_stages(&u, &task, task.cutoff, SmoothingKernel::default()).unwrap();
        assert!(bandwidth_excess(&stages.band_limited, task.cutoff, task.dt) <= 1e-12);
        assert!(stages.smoothed.max_abs() <= task.u_max);
    }
}
