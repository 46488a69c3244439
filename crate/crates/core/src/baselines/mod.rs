//! Reference optimizers: GRAPE, a projected limited-memory quasi-Newton
//! method, and the post-processing filter used for fairness comparisons.

mod filter;
mod grape;
mod lbfgs;

pub use filter::{filter_baseline, filter_stages, FilterStages, SmoothingKernel};
pub use grape::{grape_descent, run_grape, GrapeConfig};
pub use lbfgs::{minimize_box, run_quasi_newton, BoxMinimum, QuasiNewtonConfig};
