//! Euler-Lagrange dynamics `M(q) q̈ + C(q, q̇) q̇ + ∇V(q) = G(q) u` and the
//! three-mass holonomic robot.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number bound above which a mass matrix is treated as singular.
pub const MAX_MASS_CONDITION: f64 = 1e12;

/// Step used by the generic finite-difference fallbacks.
pub const FD_STEP: f64 = 1e-6;

/// Configuration `q` and velocity `q̇` of an `n`-dof mechanical system.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl GeneralizedState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::Dimension(format!(
                "q has {} entries but q̇ has {}",
                q.len(),
                qdot.len()
            )));
        }
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("state contains non-finite entries".into()));
        }
        Ok(Self { q, qdot })
    }

    pub fn from_slices(q: &[f64], qdot: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(qdot))
    }

    pub fn at_rest(q: &[f64]) -> Self {
        Self {
            q: DVector::from_column_slice(q),
            qdot: DVector::zeros(q.len()),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// An Euler-Lagrange model with the configuration split as `q = (q_u, q_a)`:
/// the first `dof - inputs` coordinates are unactuated, the rest actuated.
pub trait ElModel: Send + Sync {
    fn dof(&self) -> usize;

    fn inputs(&self) -> usize;

    /// Number of unactuated coordinates `s = n - m`.
    fn unactuated(&self) -> usize {
        self.dof() - self.inputs()
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    fn coriolis(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64>;

    fn potential(&self, q: &DVector<f64>) -> f64;

    fn potential_grad(&self, q: &DVector<f64>) -> DVector<f64>;

    fn input_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// `∂M/∂q_k`. Central differences unless a model knows better.
    fn mass_matrix_partial(&self, q: &DVector<f64>, k: usize) -> DMatrix<f64> {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += FD_STEP;
        qm[k] -= FD_STEP;
        (self.mass_matrix(&qp) - self.mass_matrix(&qm)) / (2.0 * FD_STEP)
    }

    /// Closed-form `Φ_a(q_a)` with `∇Φ_a = m_uu⁻¹ m_auᵀ`, when the model has one.
    fn actuated_offset(&self, _q_a: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// `Ṁ = Σ_k ∂M/∂q_k · q̇_k`.
    fn mass_matrix_dot(&self, state: &GeneralizedState) -> DMatrix<f64> {
        let n = self.dof();
        let mut mdot = DMatrix::zeros(n, n);
        for k in 0..n {
            if state.qdot[k] != 0.0 {
                mdot += self.mass_matrix_partial(&state.q, k) * state.qdot[k];
            }
        }
        mdot
    }
}

/// Coriolis matrix built from the Christoffel symbols of `M`:
/// `C_kj = ½ Σ_i (∂M_kj/∂q_i + ∂M_ki/∂q_j − ∂M_ij/∂q_k) q̇_i`.
///
/// This is the choice for which `Ṁ − 2C` is skew-symmetric.
pub fn christoffel_coriolis<M: ElModel + ?Sized>(
    model: &M,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> DMatrix<f64> {
    let n = model.dof();
    let partials: Vec<DMatrix<f64>> = (0..n).map(|k| model.mass_matrix_partial(q, k)).collect();
    DMatrix::from_fn(n, n, |k, j| {
        0.5 * (0..n)
            .map(|i| (partials[i][(k, j)] + partials[j][(k, i)] - partials[k][(i, j)]) * qdot[i])
            .sum::<f64>()
    })
}

fn check_state<M: ElModel + ?Sized>(model: &M, state: &GeneralizedState) -> Result<()> {
    if state.dof() != model.dof() {
        return Err(Error::Dimension(format!(
            "model has {} dof, state has {}",
            model.dof(),
            state.dof()
        )));
    }
    Ok(())
}

/// Solves `M x = rhs` by Cholesky after checking the condition number of `M`.
pub fn solve_mass(mass: &DMatrix<f64>, rhs: &DVector<f64>, max_condition: f64) -> Result<DVector<f64>> {
    let eig = mass.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::SingularMass { condition });
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or(Error::SingularMass { condition })?;
    Ok(chol.solve(rhs))
}

/// `q̈` solving `M q̈ = G u − C q̇ − ∇V`.
pub fn forward_dynamics<M: ElModel + ?Sized>(
    model: &M,
    state: &GeneralizedState,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    forward_dynamics_bounded(model, state, u, MAX_MASS_CONDITION)
}

pub fn forward_dynamics_bounded<M: ElModel + ?Sized>(
    model: &M,
    state: &GeneralizedState,
    u: &DVector<f64>,
    max_condition: f64,
) -> Result<DVector<f64>> {
    check_state(model, state)?;
    if u.len() != model.inputs() {
        return Err(Error::Dimension(format!(
            "model has {} inputs, u has {}",
            model.inputs(),
            u.len()
        )));
    }
    let q = &state.q;
    let rhs = model.input_matrix(q) * u
        - model.coriolis(q, &state.qdot) * &state.qdot
        - model.potential_grad(q);
    solve_mass(&model.mass_matrix(q), &rhs, max_condition)
}

/// How `Ṁ` is obtained for the skew-symmetry check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassRate {
    /// Through [`ElModel::mass_matrix_dot`] (analytic when the model overrides the partials).
    Analytic,
    /// Central difference of `M` along `q̇`.
    FiniteDifference { step: f64 },
}

/// Frobenius norm of `(Ṁ − 2C) + (Ṁ − 2C)ᵀ`.
pub fn skew_symmetry_residual<M: ElModel + ?Sized>(
    model: &M,
    state: &GeneralizedState,
    rate: MassRate,
) -> f64 {
    let c = model.coriolis(&state.q, &state.qdot);
    skew_residual_of(model, state, &c, rate)
}

/// Same check for an arbitrary candidate Coriolis matrix.
pub fn skew_residual_of<M: ElModel + ?Sized>(
    model: &M,
    state: &GeneralizedState,
    coriolis: &DMatrix<f64>,
    rate: MassRate,
) -> f64 {
    let mdot = match rate {
        MassRate::Analytic => model.mass_matrix_dot(state),
        MassRate::FiniteDifference { step } => {
            let qp = &state.q + &state.qdot * step;
            let qm = &state.q - &state.qdot * step;
            (model.mass_matrix(&qp) - model.mass_matrix(&qm)) / (2.0 * step)
        }
    };
    let n = mdot - coriolis * 2.0;
    (&n + n.transpose()).norm()
}

/// `½ q̇ᵀ M(q) q̇ − V(q)`.
pub fn lagrangian<M: ElModel + ?Sized>(model: &M, state: &GeneralizedState) -> f64 {
    kinetic_energy(model, state) - model.potential(&state.q)
}

pub fn kinetic_energy<M: ElModel + ?Sized>(model: &M, state: &GeneralizedState) -> f64 {
    0.5 * state.qdot.dot(&(model.mass_matrix(&state.q) * &state.qdot))
}

/// One classical Runge-Kutta step of the second-order system `q̈ = accel(q, q̇)`.
pub fn rk4_step<F>(state: &GeneralizedState, dt: f64, mut accel: F) -> Result<GeneralizedState>
where
    F: FnMut(&GeneralizedState) -> Result<DVector<f64>>,
{
    let shift = |s: &GeneralizedState, dq: &DVector<f64>, dv: &DVector<f64>, h: f64| GeneralizedState {
        q: &s.q + dq * h,
        qdot: &s.qdot + dv * h,
    };
    let a1 = accel(state)?;
    let v1 = state.qdot.clone();
    let s2 = shift(state, &v1, &a1, 0.5 * dt);
    let a2 = accel(&s2)?;
    let v2 = s2.qdot.clone();
    let s3 = shift(state, &v2, &a2, 0.5 * dt);
    let a3 = accel(&s3)?;
    let v3 = s3.qdot.clone();
    let s4 = shift(state, &v3, &a3, dt);
    let a4 = accel(&s4)?;
    let v4 = s4.qdot.clone();
    Ok(GeneralizedState {
        q: &state.q + (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0),
        qdot: &state.qdot + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0),
    })
}

/// Physical parameters of the holonomic robot.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomicParams {
    /// Mass of each of the three particles (kg).
    pub mass: f64,
    /// Spacing between neighbouring particles on the shaft (m).
    pub spacing: f64,
}

impl Default for HolonomicParams {
    fn default() -> Self {
        Self {
            mass: 0.01,
            spacing: 0.02,
        }
    }
}

impl HolonomicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.spacing > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "robot mass and spacing must be positive (got m = {}, L = {})",
                self.mass, self.spacing
            )));
        }
        Ok(())
    }
}

/// Three equal point masses on a rigid massless shaft moving in the plane.
///
/// Coordinates are `q = (x1, y1, θ)` where `(x1, y1)` is the first particle and
/// `θ` the shaft inclination. `q_u = x1` is unactuated, `q_a = (y1, θ)` actuated.
/// Inputs are `u = (f1 + f3, 2 L f3)`, forces acting normal to the shaft.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolonomicRobot {
    pub params: HolonomicParams,
}

pub fn holonomic_model(params: HolonomicParams) -> Result<HolonomicRobot> {
    params.validate()?;
    Ok(HolonomicRobot { params })
}

impl HolonomicRobot {
    fn ml(&self) -> (f64, f64) {
        (self.params.mass, self.params.spacing)
    }

    /// The Coriolis matrix exactly as it is usually printed for this robot,
    /// with the `h_s` entry in the lower-right corner.
    ///
    /// It produces the same `C q̇` as [`ElModel::coriolis`] but `Ṁ − 2C` is not
    /// skew-symmetric for it.
    pub fn printed_coriolis(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let (m, l) = self.ml();
        let (s, c) = q[2].sin_cos();
        let w = qdot[2];
        let h_s = -3.0 * l * m * (qdot[0] * c + qdot[1] * s) / 2.0;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                0.0,
                -3.0 * l * w * m * c,
                0.0,
                0.0,
                -3.0 * l * w * m * s,
                3.0 * l * w * m * c / 2.0,
                3.0 * l * w * m * s / 2.0,
                h_s,
            ],
        )
    }
}

impl ElModel for HolonomicRobot {
    fn dof(&self) -> usize {
        3
    }

    fn inputs(&self) -> usize {
        2
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (m, l) = self.ml();
        let (s, c) = q[2].sin_cos();
        DMatrix::from_row_slice(
            3,
            3,
            &[
                3.0 * m,
                0.0,
                -3.0 * l * m * s,
                0.0,
                3.0 * m,
                3.0 * l * m * c,
                -3.0 * l * m * s,
                3.0 * l * m * c,
                5.0 * l * l * m,
            ],
        )
    }

    fn mass_matrix_partial(&self, q: &DVector<f64>, k: usize) -> DMatrix<f64> {
        if k != 2 {
            return DMatrix::zeros(3, 3);
        }
        let (m, l) = self.ml();
        let (s, c) = q[2].sin_cos();
        let a = -3.0 * l * m * c;
        let b = -3.0 * l * m * s;
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, a, 0.0, 0.0, b, a, b, 0.0])
    }

    fn coriolis(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let (m, l) = self.ml();
        let (s, c) = q[2].sin_cos();
        let w = qdot[2];
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                0.0,
                -3.0 * l * m * c * w,
                0.0,
                0.0,
                -3.0 * l * m * s * w,
                0.0,
                0.0,
                0.0,
            ],
        )
    }

    fn potential(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }

    fn potential_grad(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(3)
    }

    fn input_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = q[2].sin_cos();
        DMatrix::from_row_slice(3, 2, &[-s, 0.0, c, 0.0, 0.0, 1.0])
    }

    fn actuated_offset(&self, q_a: &DVector<f64>) -> Option<DVector<f64>> {
        // d/dt (L cos θ) = −L sin θ θ̇ = m_uu⁻¹ m_auᵀ q̇_a
        Some(DVector::from_element(1, self.params.spacing * q_a[1].cos()))
    }
}
