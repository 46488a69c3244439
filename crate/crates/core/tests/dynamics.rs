mod common;

use nalgebra::DMatrix;
use padmm_core::dynamics::{
    fidelity, fidelity_and_gradient, fidelity_gradient, gate_fidelity, hermitian_expm, propagate, unitarity_deviation,
    CMatrix, GradientMode, TaskSpec, C64,
};
use padmm_core::tasks::{self, embedded_x, identity, sigma_x, sigma_z};
use padmm_core::ControlField;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn taylor_expm(h: &CMatrix, dt: f64, terms: usize) -> CMatrix {
    let d = h.nrows();
    let a = h.map(|z| z * c(0.0, -dt));
    let mut term = CMatrix::identity(d, d);
    let mut sum = term.clone();
    for k in 1..terms {
        term = &term * &a / c(k as f64, 0.0);
        sum += &term;
    }
    sum
}

fn with_slices(task: &TaskSpec, slices: usize) -> TaskSpec {
    TaskSpec::new(
        task.name.clone(),
        task.drift.clone(),
        task.controls.clone(),
        task.target.clone(),
        task.horizon,
        slices,
        task.u_max,
        task.init_scale,
        task.cutoff,
    )
    .unwrap()
}

#[test]
fn expm_of_zero_is_identity() {
    let z = CMatrix::zeros(3, 3);
    assert!(max_diff(&hermitian_expm(&z, 0.7).unwrap(), &identity(3)) < 1e-15);
}

#[test]
fn expm_of_pauli_x() {
    let dt = 0.3;
    let g = hermitian_expm(&sigma_x(), dt).unwrap();
    let expect = DMatrix::from_row_slice(
        2,
        2,
        &[c(dt.cos(), 0.0), c(0.0, -dt.sin()), c(0.0, -dt.sin()), c(dt.cos(), 0.0)],
    );
    assert!(max_diff(&g, &expect) < 1e-14);
}

#[test]
fn expm_matches_taylor_on_qutrit_drift() {
    let task = tasks::qutrit_x();
    let g = hermitian_expm(&task.drift, 0.08).unwrap();
    let t = taylor_expm(&task.drift, 0.08, 25);
    assert!(max_diff(&g, &t) < 1e-12);
    assert!(unitarity_deviation(&g) < 1e-12);
}

#[test]
fn expm_rejects_non_hermitian() {
    let mut h = CMatrix::zeros(2, 2);
    h[(0, 1)] = c(1.0, 0.0);
    assert!(hermitian_expm(&h, 0.1).is_err());
}

#[test]
fn one_qubit_free_evolution() {
    let task = tasks::one_qubit_x();
    let trace = propagate(&task, &ControlField::zeros(2, task.slices)).unwrap();
    let u = trace.final_unitary();
    let expect = DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::from_polar(1.0, -0.48),
            c(0.0, 0.0),
            c(0.0, 0.0),
            C64::from_polar(1.0, 0.48),
        ],
    );
    assert!(max_diff(u, &expect) < 1e-12);
    assert_eq!(trace.step_props.len(), task.slices);
    assert_eq!(trace.cumulative.len(), task.slices + 1);
    assert!(max_diff(&trace.cumulative[0], &identity(2)) < 1e-15);
}

#[test]
fn propagate_rejects_wrong_shape() {
    let task = tasks::one_qubit_x();
    assert!(propagate(&task, &ControlField::zeros(1, task.slices)).is_err());
    assert!(propagate(&task, &ControlField::zeros(2, task.slices + 1)).is_err());
}

#[test]
fn gate_fidelity_examples() {
    assert!((gate_fidelity(&sigma_x(), &sigma_x(), 2).unwrap() - 1.0).abs() < 1e-15);
    assert!(gate_fidelity(&identity(2), &sigma_x(), 2).unwrap().abs() < 1e-15);
    let z = sigma_z();
    assert!((gate_fidelity(&z, &identity(2), 2).unwrap()).abs() < 1e-15);
    assert!(gate_fidelity(&identity(2), &identity(3), 2).is_err());
}

#[test]
fn qutrit_identity_anchor_is_one_ninth() {
    let f = gate_fidelity(&identity(3), &embedded_x(), 3).unwrap();
    assert!((f - 1.0 / 9.0).abs() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences_on_every_preset() {
    for (ti, task) in tasks::PRESET_NAMES
        .iter()
        .map(|n| tasks::preset_task(n).unwrap())
        .enumerate()
    {
        let mut rng = common::rng(100 + ti as u64);
        for _ in 0..20 {
            let u = common::random_field(&mut rng, task.field_shape(), 0.5 * task.u_max.min(2.0));
            let g = fidelity_gradient(&task, &u, GradientMode::Exact).unwrap();
            let fd = common::fd_infidelity_gradient(&task, &u, 1e-5);
            let e = common::rel_err(&g, &fd);
            assert!(e <= 1e-5, "{}: relative error {e:e}", task.name);
        }
    }
}

#[test]
fn gradient_fidelity_agrees_with_forward_pass() {
    let task = tasks::qutrit_x();
    let u = common::random_field(&mut common::rng(5), task.field_shape(), 0.3);
    let (f, _) = fidelity_and_gradient(&task, &u, GradientMode::PaperForm).unwrap();
    assert_eq!(f, fidelity(&task, &u).unwrap());
}

#[test]
fn identity_control_has_zero_gradient() {
    let task = TaskSpec::new(
        "id-channel",
        sigma_z().map(|z| z * 0.1),
        vec![identity(2)],
        sigma_x(),
        2.0,
        20,
        1.0,
        0.1,
        2.0,
    )
    .unwrap();
    let u = common::random_field(&mut common::rng(9), task.field_shape(), 0.5);
    for mode in [GradientMode::Exact, GradientMode::PaperForm] {
        let g = fidelity_gradient(&task, &u, mode).unwrap();
        assert!(g.max_abs() < 1e-14, "{mode}: {}", g.max_abs());
    }
}

/// Smooth test pulse sampled at slice midpoints so the same signal is seen
/// at every resolution.
fn smooth_field(task: &TaskSpec) -> ControlField {
    let t_total = task.horizon;
    ControlField::from_fn(task.channels(), task.slices, |ch, k| {
        let t = (k as f64 + 0.5) * task.dt;
        let ph = ch as f64 * 0.7;
        0.4 * (std::f64::consts::PI * t / t_total).sin() * (1.0 + 0.5 * (2.3 * t + ph).cos())
    })
}

fn costate_exact_discrepancy(task: &TaskSpec) -> f64 {
    let u = smooth_field(task);
    let ge = fidelity_gradient(task, &u, GradientMode::Exact).unwrap();
    let gp = fidelity_gradient(task, &u, GradientMode::PaperForm).unwrap();
    common::rel_err(&gp, &ge)
}

#[test]
fn costate_form_converges_to_exact_with_resolution() {
    for name in tasks::PRESET_NAMES {
        let base = tasks::preset_task(name).unwrap();
        let errs: Vec<f64> = [40, 80, 160]
            .iter()
            .map(|&n| costate_exact_discrepancy(&with_slices(&base, n)))
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{name}: {errs:?}");
        for (&n, &e) in [40usize, 80, 160].iter().zip(&errs) {
            let dt = base.horizon / n as f64;
            assert!(e <= 10.0 * dt, "{name}: N={n} discrepancy {e:e}");
        }
    }
}

fn arb_task() -> impl Strategy<Value = TaskSpec> {
    prop::sample::select(tasks::PRESET_NAMES.to_vec()).prop_map(|n| tasks::preset_task(n).unwrap())
}

fn arb_case() -> impl Strategy<Value = (TaskSpec, ControlField)> {
    arb_task().prop_flat_map(|t| {
        let (m, n) = t.field_shape();
        let b = t.u_max;
        (Just(t), prop::collection::vec(-b..b, m * n))
            .prop_map(move |(t, v)| (t, ControlField::from_vec(m, n, v).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagators_are_unitary((task, u) in arb_case()) {
        let trace = propagate(&task, &u).unwrap();
        for g in trace.step_props.iter().chain(&trace.cumulative) {
            prop_assert!(unitarity_deviation(g) <= 1e-9);
        }
    }

    #[test]
    fn fidelity_is_bounded_and_deterministic((task, u) in arb_case()) {
        let f = fidelity(&task, &u).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, fidelity(&task, &u).unwrap());
    }

    #[test]
    fn fidelity_ignores_global_phase((task, u) in arb_case(), phi in -3.0f64..3.0) {
        let uf = propagate(&task, &u).unwrap().final_unitary().clone();
        let shifted = uf.map(|z| z * C64::from_polar(1.0, phi));
        let a = gate_fidelity(&uf, &task.target, task.dim).unwrap();
        let b = gate_fidelity(&shifted, &task.target, task.dim).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }
}
