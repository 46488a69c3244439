#![allow(dead_code)]

use padmm_core::dynamics::{fidelity, TaskSpec};
use padmm_core::ControlField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform field on `[-scale, scale]`.
pub fn random_field(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> ControlField {
    ControlField::from_fn(shape.0, shape.1, |_, _| rng.random_range(-scale..scale))
}

/// Central-difference gradient of an arbitrary scalar function of the field.
pub fn fd_gradient(u: &ControlField, h: f64, f: impl Fn(&ControlField) -> f64) -> ControlField {
    let (m, n) = u.shape();
    ControlField::from_fn(m, n, |c, k| {
        let mut a = u.clone();
        a.set(c, k, u.get(c, k) + h);
        let mut b = u.clone();
        b.set(c, k, u.get(c, k) - h);
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

/// Gradient of `1 - F` by central differences.
pub fn fd_infidelity_gradient(task: &TaskSpec, u: &ControlField, h: f64) -> ControlField {
    fd_gradient(u, h, |v| 1.0 - fidelity(task, v).unwrap())
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &ControlField, b: &ControlField) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(1e-300)
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Two-sided Student-t tail `P(|T| > |t|)` from the integral of the
/// density after `x = sqrt(df) tan(theta)`: the density becomes
/// proportional to `cos(theta)^(df - 1)` on `(-pi/2, pi/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let w = |th: f64| th.cos().powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let total = simpson(w, 0.0, half, 200_000);
    let inner = simpson(w, 0.0, (t.abs() / df.sqrt()).atan(), 200_000);
    1.0 - inner / total
}

/// Upper 97.5% point by bisection on the oracle tail.
pub fn t_quantile_975(df: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if t_two_sided_p(mid, df) > 0.05 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
