//! Generalized coordinate transformation `𝐪 = Φ(q)` that block-diagonalizes
//! the inertia matrix of an underactuated Euler-Lagrange system.
//!
//! With `q = (q_u, q_a)` and `X(q) = m_uu⁻¹ m_auᵀ`, the transformation is
//! `𝐪 = (q_u + Φ_a(q_a), q_a)` where `∇Φ_a = X`. Its Jacobian inverse is
//! `T(q) = [[I_s, −X], [0, I_m]]` and `Tᵀ M T = diag(m_uu, m_aa − m_au X)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::el::{solve_mass, ElModel, GeneralizedState, FD_STEP, MAX_MASS_CONDITION};
use crate::error::{Error, Result};

/// Tolerance of the finite-difference integrability (curl) test.
pub const INTEGRABILITY_TOL: f64 = 1e-6;

const GAUSS_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GAUSS_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const LINE_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OffsetMap {
    /// The model supplies `Φ_a` in closed form.
    ClosedForm,
    /// `Φ_a(q_a) = ∫₀¹ X(t q_a) q_a dt` along the straight ray from the origin.
    LineIntegral,
}

/// The transformation `T(q)`, `Φ(q)` built for a particular model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    unactuated: usize,
    actuated: usize,
    offset: OffsetMap,
}

fn blocks(mass: &DMatrix<f64>, s: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = mass.nrows();
    let m_uu = mass.view((0, 0), (s, s)).into_owned();
    let m_au = mass.view((s, 0), (n - s, s)).into_owned();
    let m_aa = mass.view((s, s), (n - s, n - s)).into_owned();
    (m_uu, m_au, m_aa)
}

fn split(q: &DVector<f64>, s: usize) -> (DVector<f64>, DVector<f64>) {
    (q.rows(0, s).into_owned(), q.rows(s, q.len() - s).into_owned())
}

fn join(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularMass { condition: f64::INFINITY })
}

/// `X(q) = m_uu⁻¹ m_auᵀ` (an `s × m` matrix).
pub fn coupling<M: ElModel + ?Sized>(model: &M, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (m_uu, m_au, _) = blocks(&model.mass_matrix(q), model.unactuated());
    Ok(inverse(&m_uu)? * m_au.transpose())
}

/// Largest violation of `∂X_ij/∂q_ak = ∂X_ik/∂q_aj` at `q`.
fn curl_residual<M: ElModel + ?Sized>(model: &M, q: &DVector<f64>) -> Result<f64> {
    let s = model.unactuated();
    let m = model.inputs();
    let mut partials = Vec::with_capacity(m);
    for k in 0..m {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[s + k] += FD_STEP;
        qm[s + k] -= FD_STEP;
        partials.push((coupling(model, &qp)? - coupling(model, &qm)?) / (2.0 * FD_STEP));
    }
    let mut worst = 0.0_f64;
    for i in 0..s {
        for j in 0..m {
            for k in (j + 1)..m {
                worst = worst.max((partials[k][(i, j)] - partials[j][(i, k)]).abs());
            }
        }
    }
    Ok(worst)
}

fn probe_points(n: usize, s: usize) -> Vec<DVector<f64>> {
    let levels = [-2.5, -1.0, -0.3, 0.0, 0.4, 1.3, 2.9];
    (0..levels.len())
        .map(|i| {
            DVector::from_fn(n, |k, _| {
                if k < s {
                    0.0
                } else {
                    levels[(i + 3 * (k - s)) % levels.len()]
                }
            })
        })
        .collect()
}

/// Builds `T(q)` and `Φ(q)` for `model`, rejecting models whose coupling
/// `m_uu⁻¹ m_auᵀ` fails the curl test at a fixed set of probe configurations.
pub fn build_transform<M: ElModel + ?Sized>(model: &M) -> Result<TransformSpec> {
    let s = model.unactuated();
    if s == 0 || model.inputs() == 0 {
        return Err(Error::Dimension(format!(
            "need at least one unactuated and one actuated coordinate (s = {s}, m = {})",
            model.inputs()
        )));
    }
    let mut worst = 0.0_f64;
    for q in probe_points(model.dof(), s) {
        worst = worst.max(curl_residual(model, &q)?);
    }
    if worst > INTEGRABILITY_TOL {
        return Err(Error::NonIntegrable { residual: worst });
    }
    let probe_a = DVector::zeros(model.inputs());
    let offset = if model.actuated_offset(&probe_a).is_some() {
        OffsetMap::ClosedForm
    } else {
        OffsetMap::LineIntegral
    };
    Ok(TransformSpec {
        unactuated: s,
        actuated: model.inputs(),
        offset,
    })
}

impl TransformSpec {
    pub fn unactuated(&self) -> usize {
        self.unactuated
    }

    pub fn actuated(&self) -> usize {
        self.actuated
    }

    pub fn uses_closed_form(&self) -> bool {
        self.offset == OffsetMap::ClosedForm
    }

    /// `T(q) = [[I, −X], [0, I]]`.
    pub fn t_matrix<M: ElModel + ?Sized>(&self, model: &M, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = coupling(model, q)?;
        let mut t = DMatrix::identity(q.len(), q.len());
        t.view_mut((0, self.unactuated), (self.unactuated, self.actuated))
            .copy_from(&(-x));
        Ok(t)
    }

    /// `T⁻¹(q) = ∇Φ(q) = [[I, X], [0, I]]`.
    pub fn t_inverse<M: ElModel + ?Sized>(&self, model: &M, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = coupling(model, q)?;
        let mut t = DMatrix::identity(q.len(), q.len());
        t.view_mut((0, self.unactuated), (self.unactuated, self.actuated))
            .copy_from(&x);
        Ok(t)
    }

    /// `Φ_a(q_a)`.
    pub fn offset<M: ElModel + ?Sized>(&self, model: &M, q_a: &DVector<f64>) -> Result<DVector<f64>> {
        match self.offset {
            OffsetMap::ClosedForm => model
                .actuated_offset(q_a)
                .ok_or_else(|| Error::Dimension("model lost its closed-form offset".into())),
            OffsetMap::LineIntegral => {
                let s = self.unactuated;
                let mut acc = DVector::zeros(s);
                let h = 1.0 / LINE_PANELS as f64;
                for p in 0..LINE_PANELS {
                    let mid = (p as f64 + 0.5) * h;
                    for (node, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter()) {
                        let t = mid + 0.5 * h * node;
                        let q = join(&DVector::zeros(s), &(q_a * t));
                        acc += coupling(model, &q)? * q_a * (0.5 * h * w);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// `𝐪 = Φ(q) = (q_u + Φ_a(q_a), q_a)`.
    pub fn phi<M: ElModel + ?Sized>(&self, model: &M, q: &DVector<f64>) -> Result<DVector<f64>> {
        let (q_u, q_a) = split(q, self.unactuated);
        let off = self.offset(model, &q_a)?;
        Ok(join(&(q_u + off), &q_a))
    }

    /// `q = Φ⁻¹(𝐪)`. `Φ` is block-triangular, so the inverse is explicit.
    pub fn phi_inverse<M: ElModel + ?Sized>(&self, model: &M, qq: &DVector<f64>) -> Result<DVector<f64>> {
        let (q1, q2) = split(qq, self.unactuated);
        let off = self.offset(model, &q2)?;
        Ok(join(&(q1 - off), &q2))
    }

    /// Maps `(q, q̇)` to `(𝐪, 𝐪̇)` with `𝐪̇ = T⁻¹ q̇`.
    pub fn to_transformed<M: ElModel + ?Sized>(
        &self,
        model: &M,
        state: &GeneralizedState,
    ) -> Result<GeneralizedState> {
        Ok(GeneralizedState {
            q: self.phi(model, &state.q)?,
            qdot: self.t_inverse(model, &state.q)? * &state.qdot,
        })
    }

    /// Maps `(𝐪, 𝐪̇)` back to `(q, q̇)` with `q̇ = T 𝐪̇`.
    pub fn from_transformed<M: ElModel + ?Sized>(
        &self,
        model: &M,
        tstate: &GeneralizedState,
    ) -> Result<GeneralizedState> {
        let q = self.phi_inverse(model, &tstate.q)?;
        let qdot = self.t_matrix(model, &q)? * &tstate.qdot;
        Ok(GeneralizedState { q, qdot })
    }
}

/// Outcome of one sampled assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub samples: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "assumption checks over {} samples", self.samples)?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<3} {:<4} residual={:<10.3e} tol={:<8.1e} {}",
                c.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.worst_residual,
                c.tolerance,
                c.description
            )?;
        }
        Ok(())
    }
}

/// Minimum number of samples [`check_assumptions`] accepts.
pub const MIN_ASSUMPTION_SAMPLES: usize = 10;

/// Sample-based check of the structural assumptions A1-A5. A pass means the
/// property holds to tolerance on every sample, not that it holds globally.
pub fn check_assumptions<M: ElModel + ?Sized>(
    model: &M,
    samples: &[GeneralizedState],
) -> Result<AssumptionReport> {
    if samples.len() < MIN_ASSUMPTION_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "assumption checks need at least {MIN_ASSUMPTION_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let s = model.unactuated();
    let n = model.dof();
    let spec = TransformSpec {
        unactuated: s,
        actuated: model.inputs(),
        offset: if model.actuated_offset(&DVector::zeros(model.inputs())).is_some() {
            OffsetMap::ClosedForm
        } else {
            OffsetMap::LineIntegral
        },
    };

    let mut a1 = 0.0_f64;
    let mut min_det = f64::INFINITY;
    let mut a2 = 0.0_f64;
    let mut a3 = 0.0_f64;
    let mut a4 = 0.0_f64;
    let mut a5 = 0.0_f64;
    let m_uu_ref = blocks(&model.mass_matrix(&samples[0].q), s).0;
    let scale = model.mass_matrix(&samples[0].q).norm().max(f64::MIN_POSITIVE);

    for sample in samples {
        let q = &sample.q;
        let mass = model.mass_matrix(q);

        let t = spec.t_matrix(model, q)?;
        min_det = min_det.min(t.determinant().abs());
        let back = spec.phi_inverse(model, &spec.phi(model, q)?)?;
        a1 = a1.max((back - q).amax());

        a2 = a2.max(curl_residual(model, q)?);
        // ∇Φ_a against X by central differences
        let x = coupling(model, q)?;
        let (_, q_a) = split(q, s);
        for k in 0..model.inputs() {
            let mut ap = q_a.clone();
            let mut am = q_a.clone();
            ap[k] += FD_STEP;
            am[k] -= FD_STEP;
            let grad = (spec.offset(model, &ap)? - spec.offset(model, &am)?) / (2.0 * FD_STEP);
            for i in 0..s {
                a2 = a2.max((grad[i] - x[(i, k)]).abs());
            }
        }

        for shift in [0.5, -1.3, 7.0] {
            let mut qs = q.clone();
            for i in 0..s {
                qs[i] += shift;
            }
            a3 = a3.max((model.mass_matrix(&qs) - &mass).amax() / scale);
        }

        a4 = a4.max((blocks(&mass, s).0 - &m_uu_ref).amax() / scale);

        for k in s..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += FD_STEP;
            qm[k] -= FD_STEP;
            let d = (model.potential_grad(&qp) - model.potential_grad(&qm)) / (2.0 * FD_STEP);
            for i in 0..s {
                a5 = a5.max(d[i].abs());
            }
        }
    }

    let checks = vec![
        AssumptionCheck {
            id: "A1",
            description: "Φ invertible with ∇Φ = T⁻¹ (det T ≠ 0, Φ⁻¹∘Φ = id)",
            passed: min_det > 1e-9 && a1 < 1e-9,
            worst_residual: a1,
            tolerance: 1e-9,
        },
        AssumptionCheck {
            id: "A2",
            description: "m_uu⁻¹ m_auᵀ integrable (curl-free, ∇Φ_a matches)",
            passed: a2 < INTEGRABILITY_TOL,
            worst_residual: a2,
            tolerance: INTEGRABILITY_TOL,
        },
        AssumptionCheck {
            id: "A3",
            description: "M depends only on q_a",
            passed: a3 < 1e-10,
            worst_residual: a3,
            tolerance: 1e-10,
        },
        AssumptionCheck {
            id: "A4",
            description: "m_uu constant",
            passed: a4 < 1e-10,
            worst_residual: a4,
            tolerance: 1e-10,
        },
        AssumptionCheck {
            id: "A5",
            description: "V(q) = V_a(q_a) + V_u(q_u)",
            passed: a5 < 1e-6,
            worst_residual: a5,
            tolerance: 1e-6,
        },
    ];
    Ok(AssumptionReport {
        samples: samples.len(),
        checks,
    })
}

/// The model expressed in the coordinates `𝐪 = Φ(q)`.
#[derive(Clone, Copy)]
pub struct TransformedModel<'a, M: ElModel + ?Sized> {
    model: &'a M,
    spec: &'a TransformSpec,
}

pub fn transform_model<'a, M: ElModel + ?Sized>(model: &'a M, spec: &'a TransformSpec) -> TransformedModel<'a, M> {
    TransformedModel { model, spec }
}

impl<'a, M: ElModel + ?Sized> TransformedModel<'a, M> {
    pub fn spec(&self) -> &TransformSpec {
        self.spec
    }

    fn original(&self, qq: &DVector<f64>) -> Result<DVector<f64>> {
        self.spec.phi_inverse(self.model, qq)
    }

    /// `𝓜(𝐪) = Tᵀ M T` at `q = Φ⁻¹(𝐪)`, computed by full matrix products.
    pub fn transformed_mass(&self, qq: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = self.original(qq)?;
        let t = self.spec.t_matrix(self.model, &q)?;
        Ok(t.transpose() * self.model.mass_matrix(&q) * t)
    }

    /// `𝐦_uu(𝐪)`.
    pub fn mass_uu(&self, qq: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = self.original(qq)?;
        Ok(blocks(&self.model.mass_matrix(&q), self.spec.unactuated).0)
    }

    /// Schur block `𝐦ᵃᵃˢ(𝐪) = m_aa − m_au m_uu⁻¹ m_auᵀ`.
    pub fn mass_aa_schur(&self, qq: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = self.original(qq)?;
        schur_block(&self.model.mass_matrix(&q), self.spec.unactuated)
    }

    pub fn potential(&self, qq: &DVector<f64>) -> Result<f64> {
        Ok(self.model.potential(&self.original(qq)?))
    }

    /// `∇𝒱(𝐪) = Tᵀ ∇V(q)`.
    pub fn potential_grad(&self, qq: &DVector<f64>) -> Result<DVector<f64>> {
        let q = self.original(qq)?;
        Ok(self.spec.t_matrix(self.model, &q)?.transpose() * self.model.potential_grad(&q))
    }

    /// `𝓖 = Tᵀ G = [G_u; G_a − m_au m_uu⁻¹ G_u]`.
    pub fn input_map(&self, qq: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = self.original(qq)?;
        Ok(self.spec.t_matrix(self.model, &q)?.transpose() * self.model.input_matrix(&q))
    }

    /// `½ 𝐪̇ᵀ diag(𝐦_uu, 𝐦ᵃᵃˢ) 𝐪̇ − 𝒱(𝐪)`.
    pub fn lagrangian(&self, tstate: &GeneralizedState) -> Result<f64> {
        let s = self.spec.unactuated;
        let (v1, v2) = split(&tstate.qdot, s);
        let ke = 0.5 * v1.dot(&(self.mass_uu(&tstate.q)? * &v1))
            + 0.5 * v2.dot(&(self.mass_aa_schur(&tstate.q)? * &v2));
        Ok(ke - self.potential(&tstate.q)?)
    }

    /// `∂𝓜/∂𝐪_k` from the partials of `M` and the chain rule `∂q/∂𝐪 = T`.
    fn mass_partials(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = q.len();
        let s = self.spec.unactuated;
        let mass = self.model.mass_matrix(q);
        let (m_uu, m_au, _) = blocks(&mass, s);
        let x = inverse(&m_uu)? * m_au.transpose();
        let by_q: Vec<DMatrix<f64>> = (0..n)
            .map(|j| {
                let dm = self.model.mass_matrix_partial(q, j);
                let (d_uu, d_au, d_aa) = blocks(&dm, s);
                let d_schur = d_aa - &d_au * &x - x.transpose() * d_au.transpose() + x.transpose() * &d_uu * &x;
                let mut out = DMatrix::zeros(n, n);
                out.view_mut((0, 0), (s, s)).copy_from(&d_uu);
                out.view_mut((s, s), (n - s, n - s)).copy_from(&d_schur);
                out
            })
            .collect();
        let t = self.spec.t_matrix(self.model, q)?;
        Ok((0..n)
            .map(|k| {
                (0..n).fold(DMatrix::zeros(n, n), |acc, j| {
                    if t[(j, k)] == 0.0 {
                        acc
                    } else {
                        acc + &by_q[j] * t[(j, k)]
                    }
                })
            })
            .collect())
    }

    /// `𝐪̈` of the decoupled Euler-Lagrange equations
    /// `𝓜 𝐪̈ + 𝓒(𝐪, 𝐪̇) 𝐪̇ + ∇𝒱 = 𝓖 u`, solved block by block.
    pub fn acceleration(&self, tstate: &GeneralizedState, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = tstate.q.len();
        let s = self.spec.unactuated;
        let q = self.original(&tstate.q)?;
        let v = &tstate.qdot;
        let partials = self.mass_partials(&q)?;
        let mut coriolis = DVector::zeros(n);
        for (k, dk) in partials.iter().enumerate() {
            coriolis += dk * v * v[k];
            coriolis[k] -= 0.5 * v.dot(&(dk * v));
        }
        let t = self.spec.t_matrix(self.model, &q)?;
        let rhs = t.transpose() * (self.model.input_matrix(&q) * u - self.model.potential_grad(&q)) - coriolis;
        let mass = self.model.mass_matrix(&q);
        let (m_uu, _, _) = blocks(&mass, s);
        let schur = schur_block(&mass, s)?;
        let (r1, r2) = split(&rhs, s);
        let a1 = solve_mass(&m_uu, &r1, MAX_MASS_CONDITION)?;
        let a2 = solve_mass(&schur, &r2, MAX_MASS_CONDITION)?;
        Ok(join(&a1, &a2))
    }
}

fn schur_block(mass: &DMatrix<f64>, s: usize) -> Result<DMatrix<f64>> {
    let (m_uu, m_au, m_aa) = blocks(mass, s);
    Ok(m_aa - &m_au * inverse(&m_uu)? * m_au.transpose())
}

/// `q̈` obtained by evaluating the decoupled equations in `𝐪` and mapping back
/// through `q̈ = T 𝐪̈ + Ṫ 𝐪̇`.
pub fn decoupled_dynamics<M: ElModel + ?Sized>(
    model: &M,
    spec: &TransformSpec,
    state: &GeneralizedState,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if state.dof() != model.dof() || u.len() != model.inputs() {
        return Err(Error::Dimension("state or input does not match the model".into()));
    }
    let s = spec.unactuated;
    let tm = transform_model(model, spec);
    let tstate = spec.to_transformed(model, state)?;
    let qq_ddot = tm.acceleration(&tstate, u)?;

    let q = &state.q;
    let mass = model.mass_matrix(q);
    let (m_uu, m_au, _) = blocks(&mass, s);
    let m_uu_inv = inverse(&m_uu)?;
    let x = &m_uu_inv * m_au.transpose();
    let n = q.len();
    let mut x_dot = DMatrix::zeros(s, n - s);
    for j in 0..n {
        if state.qdot[j] == 0.0 {
            continue;
        }
        let dm = model.mass_matrix_partial(q, j);
        let (d_uu, d_au, _) = blocks(&dm, s);
        x_dot += &m_uu_inv * (d_au.transpose() - d_uu * &x) * state.qdot[j];
    }
    let mut t_dot = DMatrix::zeros(n, n);
    t_dot.view_mut((0, s), (s, n - s)).copy_from(&(-x_dot));
    let t = spec.t_matrix(model, q)?;
    Ok(t * qq_ddot + t_dot * &tstate.qdot)
}
