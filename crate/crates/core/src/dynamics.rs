//! Piecewise-constant unitary propagation, gate fidelity and adjoint
//! gradients for small dense Hilbert spaces.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::ControlField;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
const FIDELITY_UNITARY_TOL: f64 = 1e-8;

/// Which adjoint formula [`fidelity_gradient`] evaluates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// First-order co-state formula `-(2 dt / d^2) Im Tr(L_{k+1}^dag H_m U_{k+1})`.
    PaperForm,
    /// Exact derivative of the discrete objective through the Frechet
    /// derivative of each slice exponential.
    #[default]
    Exact,
}

impl GradientMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PaperForm => "paper-form",
            Self::Exact => "exact",
        }
    }
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-form" => Ok(Self::PaperForm),
            "exact" => Ok(Self::Exact),
            other => Err(invalid(format!(
                "unknown gradient mode `{other}` (expected paper-form or exact)"
            ))),
        }
    }
}

/// A closed-system gate synthesis problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskSpecRepr", into = "TaskSpecRepr")]
pub struct TaskSpec {
    pub name: String,
    pub dim: usize,
    pub drift: CMatrix,
    pub controls: Vec<CMatrix>,
    pub target: CMatrix,
    pub horizon: f64,
    pub slices: usize,
    pub dt: f64,
    pub u_max: f64,
    pub init_scale: f64,
    pub cutoff: f64,
}

impl TaskSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        drift: CMatrix,
        controls: Vec<CMatrix>,
        target: CMatrix,
        horizon: f64,
        slices: usize,
        u_max: f64,
        init_scale: f64,
        cutoff: f64,
    ) -> Result<Self> {
        let task = Self {
            name: name.into(),
            dim: drift.nrows(),
            drift,
            controls,
            target,
            horizon,
            slices,
            dt: horizon / slices as f64,
            u_max,
            init_scale,
            cutoff,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn channels(&self) -> usize {
        self.controls.len()
    }

    pub fn field_shape(&self) -> (usize, usize) {
        (self.channels(), self.slices)
    }

    /// Largest frequency representable on the slice grid.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if !(2..=4).contains(&d) {
            return Err(invalid(format!("task `{}`: dim must be 2, 3 or 4, got {d}", self.name)));
        }
        let check_shape = |name: &str, m: &CMatrix| {
            if m.shape() != (d, d) {
                Err(Error::ShapeMismatch {
                    what: format!("task `{}` {name}", self.name),
                    expected: (d, d),
                    actual: m.shape(),
                })
            } else {
                Ok(())
            }
        };
        check_shape("drift", &self.drift)?;
        check_shape("target", &self.target)?;
        ensure_hermitian("drift", &self.drift)?;
        if self.controls.is_empty() {
            return Err(invalid(format!("task `{}` needs at least one control", self.name)));
        }
        for (m, h) in self.controls.iter().enumerate() {
            let name = format!("controls[{m}]");
            check_shape(&name, h)?;
            ensure_hermitian(&name, h)?;
        }
        let dev = unitarity_deviation(&self.target);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary {
                name: "target".into(),
                deviation: dev,
            });
        }
        if self.slices < 2 {
            return Err(invalid(format!("task `{}`: slices must be >= 2", self.name)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("task `{}`: horizon must be positive", self.name)));
        }
        if !(self.dt > 0.0) || (self.dt * self.slices as f64 - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(invalid(format!(
                "task `{}`: dt * slices must equal horizon ({} * {} != {})",
                self.name, self.dt, self.slices, self.horizon
            )));
        }
        if !(self.u_max > 0.0) || !(self.init_scale > 0.0) || !(self.cutoff > 0.0) {
            return Err(invalid(format!(
                "task `{}`: u_max, init_scale and cutoff must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Copy of the task with the drift Hamiltonian scaled by `factor`.
    pub fn with_drift_scaled(&self, factor: f64) -> Self {
        let mut t = self.clone();
        t.drift = self.drift.map(|z| z * factor);
        t
    }

    fn slice_hamiltonian(&self, u: &ControlField, k: usize) -> CMatrix {
        let mut h = self.drift.clone();
        for (m, hm) in self.controls.iter().enumerate() {
            let a = u.get(m, k);
            if a != 0.0 {
                h.zip_apply(hm, |x, y| *x += y * a);
            }
        }
        h
    }
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn hermiticity_deviation(h: &CMatrix) -> f64 {
    let n = h.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let p = u.adjoint() * u;
    let n = p.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            dev = dev.max((p[(i, j)] - e).norm());
        }
    }
    dev
}

fn ensure_hermitian(name: &str, h: &CMatrix) -> Result<()> {
    let deviation = hermiticity_deviation(h);
    if deviation > HERMITIAN_TOL || !h.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NotHermitian {
            name: name.into(),
            deviation,
        });
    }
    Ok(())
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Spectral data of one slice: `H = V diag(lambda) V^dag`, `G = exp(-i dt H)`.
#[derive(Clone, Debug)]
struct SliceExp {
    vecs: CMatrix,
    vals: Vec<f64>,
    prop: CMatrix,
}

fn slice_exp(h: CMatrix, dt: f64) -> SliceExp {
    let eig = SymmetricEigen::new(h);
    let vecs = eig.eigenvectors;
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let phase = C64::from_polar(1.0, -dt * lam);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    let prop = scaled * vecs.adjoint();
    SliceExp { vecs, vals, prop }
}

/// `exp(-i dt H)` for Hermitian `H`, through its eigendecomposition.
pub fn hermitian_expm(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    if h.nrows() != h.ncols() {
        return Err(Error::ShapeMismatch {
            what: "hermitian_expm input".into(),
            expected: (h.nrows(), h.nrows()),
            actual: h.shape(),
        });
    }
    ensure_hermitian("hermitian_expm input", h)?;
    if !dt.is_finite() {
        return Err(invalid("time step must be finite"));
    }
    Ok(slice_exp(h.clone(), dt).prop)
}

#[derive(Clone, Debug)]
pub struct PropagationTrace {
    /// Slice propagators `G_0 .. G_{N-1}`.
    pub step_props: Vec<CMatrix>,
    /// Cumulative products `U_0 = I .. U_N`.
    pub cumulative: Vec<CMatrix>,
    spectra: Vec<SliceExp>,
}

impl PropagationTrace {
    pub fn final_unitary(&self) -> &CMatrix {
        self.cumulative.last().expect("trace has at least U_0")
    }
}

pub fn propagate(task: &TaskSpec, u: &ControlField) -> Result<PropagationTrace> {
    u.ensure_shape("control field", task.field_shape())?;
    let d = task.dim;
    let mut step_props = Vec::with_capacity(task.slices);
    let mut spectra = Vec::with_capacity(task.slices);
    let mut cumulative = Vec::with_capacity(task.slices + 1);
    cumulative.push(CMatrix::identity(d, d));
    for k in 0..task.slices {
        let s = slice_exp(task.slice_hamiltonian(u, k), task.dt);
        let next = &s.prop * &cumulative[k];
        cumulative.push(next);
        step_props.push(s.prop.clone());
        spectra.push(s);
    }
    Ok(PropagationTrace {
        step_props,
        cumulative,
        spectra,
    })
}

/// `|Tr(U_tar^dag U)|^2 / d^2`.
pub fn gate_fidelity(u_final: &CMatrix, u_tar: &CMatrix, d: usize) -> Result<f64> {
    for (name, m) in [("final", u_final), ("target", u_tar)] {
        if m.shape() != (d, d) {
            return Err(Error::ShapeMismatch {
                what: format!("gate_fidelity {name}"),
                expected: (d, d),
                actual: m.shape(),
            });
        }
        let dev = unitarity_deviation(m);
        if dev > FIDELITY_UNITARY_TOL {
            return Err(Error::NotUnitary {
                name: name.into(),
                deviation: dev,
            });
        }
    }
    Ok(fidelity_unchecked(u_final, u_tar, d))
}

fn overlap(u_final: &CMatrix, u_tar: &CMatrix) -> C64 {
    // Tr(A^dag B) = sum conj(A_ij) B_ij
    u_tar.iter().zip(u_final.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn fidelity_unchecked(u_final: &CMatrix, u_tar: &CMatrix, d: usize) -> f64 {
    let f = overlap(u_final, u_tar).norm_sqr() / (d * d) as f64;
    f.clamp(0.0, 1.0)
}

/// Fidelity of the gate produced by `u`.
pub fn fidelity(task: &TaskSpec, u: &ControlField) -> Result<f64> {
    let trace = propagate(task, u)?;
    Ok(fidelity_unchecked(trace.final_unitary(), &task.target, task.dim))
}

/// Gradient of the infidelity `1 - F(u)` with respect to every control
/// amplitude.
pub fn fidelity_gradient(task: &TaskSpec, u: &ControlField, mode: GradientMode) -> Result<ControlField> {
    Ok(fidelity_and_gradient(task, u, mode)?.1)
}

/// Fidelity together with the infidelity gradient, sharing one forward and
/// one backward sweep.
pub fn fidelity_and_gradient(task: &TaskSpec, u: &ControlField, mode: GradientMode) -> Result<(f64, ControlField)> {
    let trace = propagate(task, u)?;
    let d = task.dim;
    let n = task.slices;
    let dt = task.dt;
    let tau = overlap(trace.final_unitary(), &task.target);
    let fid = (tau.norm_sqr() / (d * d) as f64).clamp(0.0, 1.0);
    let norm = 2.0 / (d * d) as f64;
    let mut grad = ControlField::zeros(task.channels(), n);

    match mode {
        GradientMode::PaperForm => {
            // Lambda_N = U_tar Tr(U_tar^dag U_N), Lambda_k = G_k^dag Lambda_{k+1}; unconjugated so
            // that Tr(Lambda^dag H U) carries the conj(tau) of d|tau|^2
            let mut lambda = task.target.map(|z| z * tau);
            for k in (0..n).rev() {
                let lam_dag = lambda.adjoint();
                let u_next = &trace.cumulative[k + 1];
                for (m, hm) in task.controls.iter().enumerate() {
                    let t = trace_product(&lam_dag, &(hm * u_next));
                    grad.set(m, k, -norm * dt * t.im);
                }
                lambda = trace.step_props[k].adjoint() * lambda;
            }
        }
        GradientMode::Exact => {
            // back = U_tar^dag G_{N-1} .. G_{k+1}
            let mut back = task.target.adjoint();
            for k in (0..n).rev() {
                let s = &trace.spectra[k];
                let kernel = divided_difference_kernel(&s.vals, dt);
                let vdag = s.vecs.adjoint();
                // W = V^dag U_k B_k V
                let w = &vdag * &trace.cumulative[k] * &back * &s.vecs;
                for (m, hm) in task.controls.iter().enumerate() {
                    let hp = &vdag * hm * &s.vecs;
                    let mut dtau = C64::new(0.0, 0.0);
                    for i in 0..d {
                        for j in 0..d {
                            dtau += w[(j, i)] * kernel[i * d + j] * hp[(i, j)];
                        }
                    }
                    grad.set(m, k, -norm * (tau.conj() * dtau).re);
                }
                back *= &s.prop;
            }
        }
    }
    Ok((fid, grad))
}

/// `K_ij = -i dt exp(-i dt (l_i + l_j) / 2) sinc(dt (l_i - l_j) / 2)`, the
/// divided difference of `exp(-i dt l)` written in a form that stays
/// accurate for (near-)degenerate eigenvalues.
fn divided_difference_kernel(vals: &[f64], dt: f64) -> Vec<C64> {
    let d = vals.len();
    let mut k = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            let mean = 0.5 * (vals[i] + vals[j]);
            let x = 0.5 * dt * (vals[i] - vals[j]);
            let sinc = if x.abs() < 1e-6 { 1.0 - x * x / 6.0 } else { x.sin() / x };
            k[i * d + j] = C64::new(0.0, -dt) * C64::from_polar(1.0, -dt * mean) * sinc;
        }
    }
    k
}

/// Serialized form: matrices are row-major rows of `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSpecRepr {
    name: String,
    dim: usize,
    drift: Vec<Vec<[f64; 2]>>,
    controls: Vec<Vec<Vec<[f64; 2]>>>,
    target: Vec<Vec<[f64; 2]>>,
    horizon: f64,
    slices: usize,
    #[serde(default)]
    dt: Option<f64>,
    u_max: f64,
    init_scale: f64,
    cutoff: f64,
}

pub fn matrix_to_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::ShapeMismatch {
            what: "complex matrix rows".into(),
            expected: (n, n),
            actual: (n, r.len()),
        });
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

impl TryFrom<TaskSpecRepr> for TaskSpec {
    type Error = Error;

    fn try_from(r: TaskSpecRepr) -> Result<Self> {
        let drift = matrix_from_pairs(&r.drift)?;
        if drift.nrows() != r.dim {
            return Err(invalid(format!(
                "task `{}`: drift is {}x{} but dim = {}",
                r.name,
                drift.nrows(),
                drift.ncols(),
                r.dim
            )));
        }
        let controls = r
            .controls
            .iter()
            .map(|c| matrix_from_pairs(c))
            .collect::<Result<Vec<_>>>()?;
        let target = matrix_from_pairs(&r.target)?;
        let task = TaskSpec::new(
            r.name,
            drift,
            controls,
            target,
            r.horizon,
            r.slices,
            r.u_max,
            r.init_scale,
            r.cutoff,
        )?;
        if let Some(dt) = r.dt {
            if (dt - task.dt).abs() > 1e-12 * task.dt {
                return Err(invalid(format!(
                    "task `{}`: dt = {dt} disagrees with horizon / slices = {}",
                    task.name, task.dt
                )));
            }
        }
        Ok(task)
    }
}

impl From<TaskSpec> for TaskSpecRepr {
    fn from(t: TaskSpec) -> Self {
        Self {
            drift: matrix_to_pairs(&t.drift),
            controls: t.controls.iter().map(matrix_to_pairs).collect(),
            target: matrix_to_pairs(&t.target),
            name: t.name,
            dim: t.dim,
            horizon: t.horizon,
            slices: t.slices,
            dt: Some(t.dt),
            u_max: t.u_max,
            init_scale: t.init_scale,
            cutoff: t.cutoff,
        }
    }
}
