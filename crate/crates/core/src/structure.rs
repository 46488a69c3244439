//! Nonsmooth regularizers, projectors and complexity metrics.
//!
//! Frequencies follow one convention throughout: DFT bin `j` of a length-`N`
//! channel sampled every `dt` has physical frequency `f_j = j / (N dt)`
//! (cycles per unit time) for `j <= N/2` and `(j - N) / (N dt)` above that.
//! The band mask keeps bin `j` iff `|f_j| <= cutoff`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{fidelity, TaskSpec};
use crate::error::{invalid, Error, Result};
use crate::field::ControlField;

/// Imaginary residue tolerated after a real round trip through the DFT.
const IMAG_RESIDUE_TOL: f64 = 1e-12;
/// Threshold below which a field counts as band-feasible.
pub const BAND_FEASIBLE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub lambda1: f64,
    pub lambda_tv: f64,
    pub cutoff: f64,
    pub u_max: f64,
}

impl StructureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda_tv >= 0.0) {
            return Err(invalid("regularizer weights must be >= 0"));
        }
        if !(self.cutoff > 0.0 && self.u_max > 0.0) {
            return Err(invalid("cutoff and u_max must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexityMetrics {
    pub total_variation: f64,
    pub bandwidth_excess: f64,
    pub l1_norm: f64,
    pub max_amp: f64,
}

impl ComplexityMetrics {
    pub fn of(u: &ControlField, cutoff: f64, dt: f64) -> Self {
        Self {
            total_variation: total_variation(u),
            bandwidth_excess: bandwidth_excess(u, cutoff, dt),
            l1_norm: u.l1(),
            max_amp: u.max_abs(),
        }
    }
}

pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

pub fn soft_threshold(x: &ControlField, tau: f64) -> Result<ControlField> {
    if !(tau >= 0.0) {
        return Err(invalid(format!("soft-threshold level must be >= 0, got {tau}")));
    }
    Ok(x.map(|v| soft_threshold_scalar(v, tau)))
}

/// First differences along time, per channel: `(Du)_k = u_{k+1} - u_k`.
pub fn diff_forward(u: &ControlField) -> Result<ControlField> {
    let (m, n) = u.shape();
    if n < 2 {
        return Err(invalid(format!("difference operator needs >= 2 slices, got {n}")));
    }
    Ok(ControlField::from_fn(m, n - 1, |c, k| u.get(c, k + 1) - u.get(c, k)))
}

/// Transpose of [`diff_forward`]: maps `M x (N-1)` back to `M x N`.
pub fn diff_adjoint(v: &ControlField) -> Result<ControlField> {
    let (m, len) = v.shape();
    if len < 1 {
        return Err(invalid("difference adjoint needs a non-empty input"));
    }
    let n = len + 1;
    Ok(ControlField::from_fn(m, n, |c, k| {
        let left = if k >= 1 { v.get(c, k - 1) } else { 0.0 };
        let right = if k < len { v.get(c, k) } else { 0.0 };
        left - right
    }))
}

pub fn total_variation(u: &ControlField) -> f64 {
    let (m, n) = u.shape();
    let mut tv = 0.0;
    for c in 0..m {
        let row = u.row(c);
        for k in 0..n.saturating_sub(1) {
            tv += (row[k + 1] - row[k]).abs();
        }
    }
    tv
}

pub fn box_project(u: &ControlField, u_max: f64) -> ControlField {
    u.map(|v| v.clamp(-u_max, u_max))
}

pub fn bin_frequency(j: usize, n: usize, dt: f64) -> f64 {
    let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    signed / (n as f64 * dt)
}

/// `true` for bins inside the closed band `|f_j| <= cutoff`.
pub fn band_mask(n: usize, cutoff: f64, dt: f64) -> Vec<bool> {
    // relative slack so that bins sitting exactly on the cutoff survive roundoff
    (0..n)
        .map(|j| bin_frequency(j, n, dt).abs() <= cutoff * (1.0 + 1e-12))
        .collect()
}

struct FftCache {
    planner: FftPlanner<f64>,
}

thread_local! {
    static FFT: RefCell<FftCache> = RefCell::new(FftCache { planner: FftPlanner::new() });
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    FFT.with(|c| {
        let mut c = c.borrow_mut();
        (c.planner.plan_fft_forward(n), c.planner.plan_fft_inverse(n))
    })
}

fn spectrum(row: &[f64], fwd: &Arc<dyn Fft<f64>>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = row.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    buf
}

/// Zeroes every DFT bin outside the band, channel by channel.
pub fn bandlimit_project(u: &ControlField, cutoff: f64, dt: f64) -> Result<ControlField> {
    if !(cutoff > 0.0) {
        return Err(invalid(format!("cutoff must be > 0, got {cutoff}")));
    }
    let (m, n) = u.shape();
    let mask = band_mask(n, cutoff, dt);
    if mask.iter().all(|&keep| keep) {
        return Ok(u.clone());
    }
    let (fwd, inv) = plans(n);
    let mut out = ControlField::zeros(m, n);
    for c in 0..m {
        let mut buf = spectrum(u.row(c), &fwd);
        for (z, &keep) in buf.iter_mut().zip(&mask) {
            if !keep {
                *z = Complex::new(0.0, 0.0);
            }
        }
        inv.process(&mut buf);
        let scale = u.row(c).iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (k, z) in buf.iter().enumerate() {
            let im = z.im / n as f64;
            if im.abs() > IMAG_RESIDUE_TOL * scale {
                return Err(Error::Internal(format!(
                    "band-limit round trip left imaginary residue {im:.3e} in channel {c}"
                )));
            }
            out.set(c, k, z.re / n as f64);
        }
    }
    Ok(out)
}

/// Out-of-band spectral energy `sum_{|f_j| > cutoff} |u_hat_j|^2 / N`.
pub fn bandwidth_excess(u: &ControlField, cutoff: f64, dt: f64) -> f64 {
    let (m, n) = u.shape();
    if n == 0 {
        return 0.0;
    }
    let mask = band_mask(n, cutoff, dt);
    if mask.iter().all(|&keep| keep) {
        return 0.0;
    }
    let (fwd, _) = plans(n);
    let mut excess = 0.0;
    for c in 0..m {
        let spec = spectrum(u.row(c), &fwd);
        excess += spec
            .iter()
            .zip(&mask)
            .filter(|(_, &keep)| !keep)
            .map(|(z, _)| z.norm_sqr())
            .sum::<f64>();
    }
    excess / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub infidelity: f64,
    pub l1_term: f64,
    pub tv_term: f64,
    pub box_feasible: bool,
    pub band_feasible: bool,
    pub total: f64,
}

/// Smooth and nonsmooth terms of the structured objective; the two
/// indicator terms are reported as feasibility flags.
pub fn structured_objective(task: &TaskSpec, u: &ControlField, params: &StructureParams) -> Result<ObjectiveBreakdown> {
    params.validate()?;
    let infidelity = 1.0 - fidelity(task, u)?;
    let l1_term = params.lambda1 * u.l1();
    let tv_term = params.lambda_tv * total_variation(u);
    Ok(ObjectiveBreakdown {
        infidelity,
        l1_term,
        tv_term,
        box_feasible: u.max_abs() <= params.u_max,
        band_feasible: bandwidth_excess(u, params.cutoff, task.dt) <= BAND_FEASIBLE_TOL,
        total: infidelity + l1_term + tv_term,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::tasks;

    fn row(v: &[f64]) -> ControlField {
        ControlField::from_rows(&[v.to_vec()]).unwrap()
    }

    fn lcg(seed: u64, len: usize) -> Vec<f64> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold_scalar(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold_scalar(-0.5, 1.0), 0.0);
        for x in [-2.5, -0.1, 0.0, 0.7, 9.0] {
            assert_eq!(soft_threshold_scalar(x, 0.0), x);
        }
        assert!(soft_threshold(&row(&[1.0]), -0.1).is_err());
    }

    #[test]
    fn difference_examples() {
        assert_eq!(diff_forward(&row(&[1.0, 1.0, 1.0])).unwrap(), row(&[0.0, 0.0]));
        assert_eq!(diff_forward(&row(&[0.0, 1.0, 0.0])).unwrap(), row(&[1.0, -1.0]));
        assert!(diff_forward(&row(&[1.0])).is_err());
    }

    #[test]
    fn difference_adjoint_identity() {
        let u = ControlField::from_vec(2, 7, lcg(1, 14)).unwrap();
        let v = ControlField::from_vec(2, 6, lcg(2, 12)).unwrap();
        let lhs = diff_forward(&u).unwrap().dot(&v);
        let rhs = u.dot(&diff_adjoint(&v).unwrap());
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(total_variation(&ControlField::constant(2, 5, 0.3)), 0.0);
        assert_eq!(total_variation(&row(&[0.0, 1.0, 0.0])), 2.0);
        let two = ControlField::from_rows(&[vec![0.0, 2.0, 0.0], vec![0.0, 2.0, 0.0]]).unwrap();
        assert_eq!(total_variation(&two), 8.0);
    }

    #[test]
    fn band_projection_examples() {
        let dc = row(&[0.4; 8]);
        let p = bandlimit_project(&dc, 0.1, 1.0).unwrap();
        for (a, b) in p.as_slice().iter().zip(dc.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }

        let bin3: Vec<f64> = (0..8).map(|k| (2.0 * PI * 3.0 * k as f64 / 8.0).cos()).collect();
        let p = bandlimit_project(&row(&bin3), 0.25, 1.0).unwrap();
        assert!(p.max_abs() < 1e-15);

        let x = ControlField::from_vec(3, 40, lcg(9, 120)).unwrap();
        let p1 = bandlimit_project(&x, 1.8, 0.12).unwrap();
        let p2 = bandlimit_project(&p1, 1.8, 0.12).unwrap();
        assert!(p1.sub(&p2).max_abs() <= 1e-12);
    }

    #[test]
    fn boundary_bin_is_kept() {
        // f_2 = 2 / 8 = 0.25 exactly
        let mask = band_mask(8, 0.25, 1.0);
        assert_eq!(mask, vec![true, true, true, false, false, false, true, true]);
    }

    #[test]
    fn bandwidth_excess_examples() {
        assert_eq!(bandwidth_excess(&ControlField::zeros(2, 30), 1.0, 0.1), 0.0);
        let x = ControlField::from_vec(2, 60, lcg(4, 120)).unwrap();
        let p = bandlimit_project(&x, 2.5, 0.08).unwrap();
        assert!(bandwidth_excess(&p, 2.5, 0.08) <= 1e-12);

        // direct DFT-sum oracle for the bin-3 cosine: |X_3| = |X_5| = 4
        let bin3: Vec<f64> = (0..8).map(|k| (2.0 * PI * 3.0 * k as f64 / 8.0).cos()).collect();
        let mut oracle = 0.0;
        for j in 0..8 {
            let f = bin_frequency(j, 8, 1.0);
            if f.abs() > 0.25 {
                let (mut re, mut im) = (0.0, 0.0);
                for (k, &x) in bin3.iter().enumerate() {
                    let ang = -2.0 * PI * (j * k) as f64 / 8.0;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                oracle += re * re + im * im;
            }
        }
        oracle /= 8.0;
        assert!((oracle - 4.0).abs() < 1e-12);
        assert!((bandwidth_excess(&row(&bin3), 0.25, 1.0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn box_projection_examples() {
        assert_eq!(box_project(&row(&[5.0]), 4.0), row(&[4.0]));
        assert_eq!(box_project(&row(&[-0.3]), 4.0), row(&[-0.3]));
        let x = ControlField::from_vec(1, 10, lcg(5, 10)).unwrap().scale(3.0);
        let once = box_project(&x, 1.0);
        assert_eq!(box_project(&once, 1.0), once);
    }

    #[test]
    fn structured_objective_examples() {
        let task = tasks::one_qubit_x();
        let zero = ControlField::zeros(2, 40);
        let params = StructureParams {
            lambda1: 0.3,
            lambda_tv: 0.2,
            cutoff: 1.8,
            u_max: 4.0,
        };
        let b = structured_objective(&task, &zero, &params).unwrap();
        assert_eq!(b.l1_term, 0.0);
        assert_eq!(b.tv_term, 0.0);
        // X is off-diagonal, free evolution is diagonal
        assert!((b.infidelity - 1.0).abs() < 1e-15);
        assert_eq!(b.total, b.infidelity);
        assert!(b.box_feasible && b.band_feasible);

        let u = ControlField::from_vec(2, 40, lcg(3, 80)).unwrap().scale(0.5);
        let free = StructureParams {
            lambda1: 0.0,
            lambda_tv: 0.0,
            ..params
        };
        let b = structured_objective(&task, &u, &free).unwrap();
        assert_eq!(b.total, b.infidelity);
        assert!(!b.band_feasible);
    }
}
