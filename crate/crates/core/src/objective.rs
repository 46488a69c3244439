//! Smooth infidelity objectives shared by every optimizer.

use crate::dynamics::{fidelity, fidelity_and_gradient, GradientMode, TaskSpec};
use crate::error::Result;
use crate::field::ControlField;

/// A smooth infidelity-type loss `J(u)` with its gradient.
pub trait SmoothObjective: Sync {
    /// `(J(u), grad J(u), nominal fidelity of u)`.
    fn evaluate(&self, u: &ControlField) -> Result<Evaluation>;

    /// Number of forward-backward propagations one `evaluate` stands for.
    fn cost(&self) -> u64 {
        1
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: ControlField,
    pub fidelity: f64,
}

/// Plain gate infidelity `1 - F(u)`.
#[derive(Clone, Copy, Debug)]
pub struct Infidelity<'a> {
    pub task: &'a TaskSpec,
    pub mode: GradientMode,
}

impl<'a> Infidelity<'a> {
    pub fn new(task: &'a TaskSpec, mode: GradientMode) -> Self {
        Self { task, mode }
    }

    pub fn fidelity(&self, u: &ControlField) -> Result<f64> {
        fidelity(self.task, u)
    }
}

impl SmoothObjective for Infidelity<'_> {
    fn evaluate(&self, u: &ControlField) -> Result<Evaluation> {
        let (fid, gradient) = fidelity_and_gradient(self.task, u, self.mode)?;
        Ok(Evaluation {
            loss: 1.0 - fid,
            gradient,
            fidelity: fid,
        })
    }
}

/// Operation counters reported with every run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub objective: u64,
    pub gradient: u64,
}

impl Counters {
    pub fn add(&mut self, objective: u64, gradient: u64) {
        self.objective += objective;
        self.gradient += gradient;
    }
}
