//! Built-in benchmark tasks.
//!
//! Only parameter summaries of these models are fixed externally, so the
//! concrete operators below are the standard minimal models that match
//! them. Every matrix ends up in the serialized config, where it can be
//! replaced without touching code.

use nalgebra::Complex;

use crate::dynamics::{CMatrix, TaskSpec, C64};
use crate::error::{invalid, Result};

pub const ONE_QUBIT: &str = "1q-x";
pub const QUTRIT: &str = "qutrit-x";
pub const TWO_QUBIT: &str = "2q-ent";

pub const PRESET_NAMES: [&str; 3] = [ONE_QUBIT, QUTRIT, TWO_QUBIT];

fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

fn mat(n: usize, entries: &[C64]) -> CMatrix {
    CMatrix::from_row_slice(n, n, entries)
}

pub fn sigma_x() -> CMatrix {
    mat(2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn sigma_y() -> CMatrix {
    mat(2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn sigma_z() -> CMatrix {
    mat(2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    m.map(|z| z * s)
}

/// X gate, drives on sigma_x and sigma_y, `H0 = (0.2 / 2) sigma_z`.
pub fn one_qubit_x() -> TaskSpec {
    TaskSpec::new(
        ONE_QUBIT,
        scaled(&sigma_z(), 0.2 / 2.0),
        vec![sigma_x(), sigma_y()],
        sigma_x(),
        4.80,
        40,
        4.00,
        0.020,
        1.8,
    )
    .expect("preset is valid")
}

/// Transmon-like qutrit with quadrature drives; target is X on the
/// computational subspace and identity on the leakage level.
pub fn qutrit_x() -> TaskSpec {
    let omega01 = 1.0;
    let alpha = -0.22;
    let drift = mat(
        3,
        &[
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(omega01, 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(2.0 * omega01 + alpha, 0.),
        ],
    );
    let s2 = 2f64.sqrt();
    // X = a + a^dag, Y = i (a^dag - a)
    let qx = mat(
        3,
        &[
            c(0., 0.),
            c(1., 0.),
            c(0., 0.),
            c(1., 0.),
            c(0., 0.),
            c(s2, 0.),
            c(0., 0.),
            c(s2, 0.),
            c(0., 0.),
        ],
    );
    let qy = mat(
        3,
        &[
            c(0., 0.),
            c(0., -1.),
            c(0., 0.),
            c(0., 1.),
            c(0., 0.),
            c(0., -s2),
            c(0., 0.),
            c(0., s2),
            c(0., 0.),
        ],
    );
    TaskSpec::new(QUTRIT, drift, vec![qx, qy], embedded_x(), 4.80, 60, 2.80, 0.015, 2.5).expect("preset is valid")
}

/// X on levels {0, 1}, identity on level 2.
pub fn embedded_x() -> CMatrix {
    mat(
        3,
        &[
            c(0., 0.),
            c(1., 0.),
            c(0., 0.),
            c(1., 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(1., 0.),
        ],
    )
}

pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c(1., 0.);
    m[(1, 1)] = c(1., 0.);
    m[(2, 3)] = c(1., 0.);
    m[(3, 2)] = c(1., 0.);
    m
}

/// Two exchange-coupled qubits with a CNOT target.
pub fn two_qubit_entangler() -> TaskSpec {
    let (w1, w2, j) = (0.3, 0.36, 0.15);
    let i2 = identity(2);
    let drift = scaled(&kron(&sigma_z(), &i2), w1 / 2.0)
        + scaled(&kron(&i2, &sigma_z()), w2 / 2.0)
        + scaled(&kron(&sigma_x(), &sigma_x()), j);
    let controls = vec![
        kron(&sigma_x(), &i2),
        kron(&i2, &sigma_x()),
        kron(&sigma_y(), &i2) + kron(&i2, &sigma_y()),
    ];
    TaskSpec::new(TWO_QUBIT, drift, controls, cnot(), 3.20, 40, 3.20, 0.010, 1.0).expect("preset is valid")
}

pub fn preset_task(name: &str) -> Result<TaskSpec> {
    match name {
        ONE_QUBIT => Ok(one_qubit_x()),
        QUTRIT => Ok(qutrit_x()),
        TWO_QUBIT => Ok(two_qubit_entangler()),
        other => Err(invalid(format!(
            "unknown preset `{other}` (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
