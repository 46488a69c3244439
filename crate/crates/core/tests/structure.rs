mod common;

use padmm_core::structure::{
    band_mask, bandlimit_project, bandwidth_excess, box_project, diff_adjoint, diff_forward, soft_threshold,
    soft_threshold_scalar, total_variation,
};
use padmm_core::ControlField;
use proptest::prelude::*;

/// Minimizer of `0.5 (z - x)^2 + tau |z|` over a uniform grid.
fn grid_prox(x: f64, tau: f64, step: f64) -> f64 {
    let lo = x.abs() + tau + 1.0;
    let n = (2.0 * lo / step).ceil() as i64;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let z = -lo + i as f64 * step;
        let v = 0.5 * (z - x).powi(2) + tau * z.abs();
        if v < best.0 {
            best = (v, z);
        }
    }
    best.1
}

#[test]
fn soft_threshold_matches_grid_prox() {
    let step = 1e-4;
    let mut rng = common::rng(1);
    for _ in 0..200 {
        let f = common::random_field(&mut rng, (1, 2), 3.0);
        let (x, tau) = (f.get(0, 0), f.get(0, 1).abs());
        let z = soft_threshold_scalar(x, tau);
        assert!((z - grid_prox(x, tau, step)).abs() <= step, "x={x} tau={tau}");
    }
}

#[test]
fn soft_threshold_rejects_negative_threshold() {
    assert!(soft_threshold(&ControlField::zeros(1, 3), -1.0).is_err());
}

fn arb_field(max_m: usize, max_n: usize) -> impl Strategy<Value = ControlField> {
    (1..=max_m, 2..=max_n).prop_flat_map(|(m, n)| {
        prop::collection::vec(-5.0f64..5.0, m * n).prop_map(move |v| ControlField::from_vec(m, n, v).unwrap())
    })
}

fn arb_pair(max_m: usize, max_n: usize) -> impl Strategy<Value = (ControlField, ControlField)> {
    (1..=max_m, 2..=max_n).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(-5.0f64..5.0, m * n),
            prop::collection::vec(-5.0f64..5.0, m * n),
        )
            .prop_map(move |(a, b)| {
                (
                    ControlField::from_vec(m, n, a).unwrap(),
                    ControlField::from_vec(m, n, b).unwrap(),
                )
            })
    })
}

fn arb_band() -> impl Strategy<Value = (f64, f64)> {
    (0.01f64..0.5, 0.05f64..6.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn soft_threshold_is_nonexpansive((a, b) in arb_pair(3, 30), tau in 0.0f64..3.0) {
        let d = soft_threshold(&a, tau).unwrap().sub(&soft_threshold(&b, tau).unwrap()).norm2();
        prop_assert!(d <= a.sub(&b).norm2() + 1e-12);
    }

    #[test]
    fn difference_adjoint_identity((u, _) in arb_pair(3, 40), seed in any::<u64>()) {
        let (m, n) = u.shape();
        let v = common::random_field(&mut common::rng(seed), (m, n - 1), 5.0);
        let lhs = diff_forward(&u).unwrap().dot(&v);
        let rhs = u.dot(&diff_adjoint(&v).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn total_variation_is_l1_of_differences(u in arb_field(3, 40)) {
        let tv = total_variation(&u);
        prop_assert!((tv - diff_forward(&u).unwrap().l1()).abs() <= 1e-12 * (1.0 + tv));
    }

    #[test]
    fn band_projection_is_idempotent(u in arb_field(3, 64), (dt, cutoff) in arb_band()) {
        let p = bandlimit_project(&u, cutoff, dt).unwrap();
        let pp = bandlimit_project(&p, cutoff, dt).unwrap();
        prop_assert!(pp.sub(&p).max_abs() <= 1e-12 * (1.0 + u.max_abs()));
        prop_assert!(bandwidth_excess(&p, cutoff, dt) <= 1e-12);
    }

    #[test]
    fn band_projection_is_nonexpansive((a, b) in arb_pair(3, 64), (dt, cutoff) in arb_band()) {
        let pa = bandlimit_project(&a, cutoff, dt).unwrap();
        let pb = bandlimit_project(&b, cutoff, dt).unwrap();
        prop_assert!(pa.sub(&pb).norm2() <= a.sub(&b).norm2() + 1e-12);
    }

    #[test]
    fn projection_and_residual_are_orthogonal(u in arb_field(3, 64), (dt, cutoff) in arb_band()) {
        // Parseval: the kept and removed parts split the energy.
        let p = bandlimit_project(&u, cutoff, dt).unwrap();
        let r = u.sub(&p);
        let tol = 1e-10 * (1.0 + u.dot(&u));
        prop_assert!(p.dot(&r).abs() <= tol);
        prop_assert!((p.dot(&p) + r.dot(&r) - u.dot(&u)).abs() <= tol);
        let excess = bandwidth_excess(&u, cutoff, dt);
        prop_assert!((excess - r.dot(&r)).abs() <= tol);
    }

    #[test]
    fn mask_is_symmetric_and_keeps_dc(n in 2usize..200, (dt, cutoff) in arb_band()) {
        let mask = band_mask(n, cutoff, dt);
        prop_assert_eq!(mask.len(), n);
        prop_assert!(mask[0]);
        for j in 1..n {
            prop_assert_eq!(mask[j], mask[n - j]);
        }
    }

    #[test]
    fn box_projection_is_clamp(u in arb_field(3, 30), b in 0.1f64..4.0) {
        let p = box_project(&u, b);
        prop_assert!(p.max_abs() <= b);
        let q = box_project(&p, b);
        prop_assert_eq!(p, q);
    }
}
