//! Structured pulse synthesis for small closed quantum systems: dynamics,
//! proximal structure operators, a split solver, baselines, robust training
//! and a reproducible benchmark harness.

// Negated float comparisons in the validators are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod objective;
pub mod padmm;
pub mod pareto;
pub mod record;
pub mod rng;
pub mod robust;
pub mod stats;
pub mod structure;
pub mod tasks;

pub use error::{Error, Result};
pub use field::ControlField;
