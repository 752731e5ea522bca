//! State-dependent coefficient form `ẋ = A(x) x + B(x) u` of the six-state
//! holonomic plant `x = (x1, ẋ1, y1, ẏ1, θ, θ̇)`.
//!
//! Drift and input matrix are never typed in by hand: both are sampled from
//! the decoupled dynamics, which are checked against forward dynamics.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::el::{GeneralizedState, HolonomicParams, HolonomicRobot};
use crate::error::{Error, Result};
use crate::transform::{build_transform, decoupled_dynamics, TransformSpec};

pub type PlantState = Vector6<f64>;

/// Default relative tolerance for the numerical controllability rank.
pub const RANK_TOL: f64 = 1e-10;

/// Pivot magnitude below which a drift coefficient uses its limit value.
pub const PIVOT_EPS: f64 = 1e-9;

const ACCEL_ROWS: [usize; 3] = [1, 3, 5];

pub fn plant_state(state: &GeneralizedState) -> Result<PlantState> {
    if state.dof() != 3 {
        return Err(Error::Dimension(format!("plant state needs 3 dof, got {}", state.dof())));
    }
    Ok(PlantState::new(
        state.q[0],
        state.qdot[0],
        state.q[1],
        state.qdot[1],
        state.q[2],
        state.qdot[2],
    ))
}

pub fn generalized_state(x: &PlantState) -> GeneralizedState {
    GeneralizedState {
        q: DVector::from_column_slice(&[x[0], x[2], x[4]]),
        qdot: DVector::from_column_slice(&[x[1], x[3], x[5]]),
    }
}

/// Goal state with zero velocities.
pub fn goal_state(x: f64, y: f64, theta: f64) -> PlantState {
    PlantState::new(x, 0.0, y, 0.0, theta, 0.0)
}

/// Frozen `(A, B)` pair at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcForm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SdcForm {
    pub fn apply(&self, x: &PlantState, u: &[f64; 2]) -> PlantState {
        let xd = DVector::from_column_slice(x.as_slice());
        let ud = DVector::from_column_slice(u);
        let out = &self.a * xd + &self.b * ud;
        PlantState::from_column_slice(out.as_slice())
    }
}

/// How each acceleration-row drift term is spread over the columns of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Factorization {
    /// Drift `g` is placed on the `θ̇` column as `g / e_θ̇`, or its limit
    /// `∂g/∂θ̇` when `|e_θ̇| ≤ ε`.
    PivotDivision,
    /// Row `a = a₀ + (g − a₀·e) (w ∘ e) / Σ wᵢ eᵢ²`, so `a·e = g` for any
    /// template `a₀`. The template couples the translational rows to the
    /// angle states and keeps the frozen pair controllable at rest.
    Projection(CouplingTemplate),
}

impl Default for Factorization {
    fn default() -> Self {
        Factorization::Projection(CouplingTemplate::default())
    }
}

/// Template rows for the `ẍ1` and `ÿ1` equations and projection weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingTemplate {
    pub x_row: [f64; 6],
    pub y_row: [f64; 6],
    pub weights: [f64; 6],
}

impl Default for CouplingTemplate {
    fn default() -> Self {
        Self {
            x_row: [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            y_row: [0.0; 6],
            weights: [1.0; 6],
        }
    }
}

impl CouplingTemplate {
    pub fn validate(&self) -> Result<()> {
        let finite = self.x_row.iter().chain(self.y_row.iter()).all(|v| v.is_finite());
        let weights = self.weights.iter().all(|w| w.is_finite() && *w > 0.0);
        if finite && weights {
            Ok(())
        } else {
            Err(Error::InvalidConfig("coupling template must be finite with positive weights".into()))
        }
    }
}

fn projected_row(template: &[f64; 6], weights: &[f64; 6], e: &PlantState, g: f64) -> [f64; 6] {
    let norm2: f64 = (0..6).map(|i| weights[i] * e[i] * e[i]).sum();
    let mut row = *template;
    if norm2 <= f64::MIN_POSITIVE {
        return row;
    }
    let dot: f64 = (0..6).map(|i| template[i] * e[i]).sum();
    let scale = (g - dot) / norm2;
    for i in 0..6 {
        row[i] += scale * weights[i] * e[i];
    }
    row
}

/// The six-state plant with a chosen SDC factorization.
#[derive(Debug, Clone)]
pub struct SdcPlant {
    model: HolonomicRobot,
    spec: TransformSpec,
    factorization: Factorization,
}

pub fn sdc_factorize(model: HolonomicRobot, factorization: Factorization) -> Result<SdcPlant> {
    if let Factorization::Projection(t) = &factorization {
        t.validate()?;
    }
    let spec = build_transform(&model)?;
    Ok(SdcPlant {
        model,
        spec,
        factorization,
    })
}

impl SdcPlant {
    pub fn model(&self) -> &HolonomicRobot {
        &self.model
    }

    pub fn params(&self) -> HolonomicParams {
        self.model.params
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    /// `(ẍ1, ÿ1, θ̈)` from the decoupled dynamics.
    pub fn accelerations(&self, x: &PlantState, u: &[f64; 2]) -> Result<Vector3<f64>> {
        let state = generalized_state(x);
        let acc = decoupled_dynamics(&self.model, &self.spec, &state, &DVector::from_column_slice(u))?;
        Ok(Vector3::new(acc[0], acc[1], acc[2]))
    }

    /// `f(x, u)` in first-order form.
    pub fn dynamics(&self, x: &PlantState, u: &[f64; 2]) -> Result<PlantState> {
        let acc = self.accelerations(x, u)?;
        Ok(PlantState::new(x[1], acc[0], x[3], acc[1], x[5], acc[2]))
    }

    /// Drift accelerations at `u = 0`.
    pub fn drift(&self, x: &PlantState) -> Result<Vector3<f64>> {
        self.accelerations(x, &[0.0, 0.0])
    }

    /// `B(x)`, sampled column by column from the decoupled dynamics.
    pub fn input_matrix(&self, x: &PlantState) -> Result<DMatrix<f64>> {
        let drift = self.drift(x)?;
        let mut b = DMatrix::zeros(6, 2);
        for j in 0..2 {
            let mut u = [0.0; 2];
            u[j] = 1.0;
            let col = self.accelerations(x, &u)? - drift;
            for (k, row) in ACCEL_ROWS.iter().enumerate() {
                b[(*row, j)] = col[k];
            }
        }
        Ok(b)
    }

    /// `A(x)` for the error state `e = x − goal`, with `A(x) e` equal to the
    /// drift of the plant at `x`. `goal` must have zero velocities.
    pub fn drift_matrix(&self, x: &PlantState, goal: &PlantState) -> Result<DMatrix<f64>> {
        if goal[1] != 0.0 || goal[3] != 0.0 || goal[5] != 0.0 {
            return Err(Error::InvalidConfig("goal velocities must be zero".into()));
        }
        let e = x - goal;
        let drift = self.drift(x)?;
        let mut a = DMatrix::zeros(6, 6);
        a[(0, 1)] = 1.0;
        a[(2, 3)] = 1.0;
        a[(4, 5)] = 1.0;
        match &self.factorization {
            Factorization::PivotDivision => {
                for (k, row) in ACCEL_ROWS.iter().enumerate() {
                    a[(*row, 5)] = self.pivot_coefficient(x, e[5], drift[k], k)?;
                }
            }
            Factorization::Projection(t) => {
                let rows = [&t.x_row, &t.y_row, &[0.0; 6]];
                for (k, row) in ACCEL_ROWS.iter().enumerate() {
                    let coeffs = projected_row(rows[k], &t.weights, &e, drift[k]);
                    for (col, v) in coeffs.iter().enumerate() {
                        a[(*row, col)] = *v;
                    }
                }
            }
        }
        Ok(a)
    }

    fn pivot_coefficient(&self, x: &PlantState, pivot: f64, g: f64, k: usize) -> Result<f64> {
        if pivot.abs() > PIVOT_EPS {
            return Ok(g / pivot);
        }
        let scale = x.norm().max(1.0);
        if g.abs() > 1e-9 * scale {
            return Err(Error::Factorization(format!(
                "drift {g:.3e} is nonzero while the pivot θ̇ = {pivot:.3e} vanishes"
            )));
        }
        // limit value g/θ̇ → ∂g/∂θ̇ at θ̇ = 0
        let h = 1e-6;
        let mut xp = *x;
        let mut xm = *x;
        xp[5] = h;
        xm[5] = -h;
        Ok((self.drift(&xp)?[k] - self.drift(&xm)?[k]) / (2.0 * h))
    }

    pub fn form(&self, x: &PlantState, goal: &PlantState) -> Result<SdcForm> {
        Ok(SdcForm {
            a: self.drift_matrix(x, goal)?,
            b: self.input_matrix(x)?,
        })
    }
}

/// `[B, AB, …, Aⁿ⁻¹B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// Numerical rank: singular values above `tol · σ_max`.
pub fn ctrb_rank(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> usize {
    let c = controllability_matrix(a, b);
    let sv = c.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * max).count()
}

/// One entry of the degenerate-state catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateState {
    pub state: PlantState,
    pub rank: usize,
}

/// Ranks at rest states with `sin θ = 0` and `θ̇ = 0`, relative to `goal`.
pub fn degenerate_catalog(plant: &SdcPlant, goal: &PlantState, tol: f64) -> Vec<DegenerateState> {
    let mut out = Vec::new();
    for theta in [-std::f64::consts::PI, 0.0, std::f64::consts::PI] {
        for dx in [-0.3, 0.0, 0.2] {
            for dy in [-0.25, 0.0, 0.15] {
                for vel in [0.0, 0.1] {
                    let x = PlantState::new(goal[0] + dx, vel, goal[2] + dy, -vel, theta, 0.0);
                    let rank = match plant.form(&x, goal) {
                        Ok(f) => ctrb_rank(&f.a, &f.b, tol),
                        Err(_) => 0,
                    };
                    out.push(DegenerateState { state: x, rank });
                }
            }
        }
    }
    out
}

/// The `A(x)`, `B(x)` pair as printed in the reference derivation, kept for
/// comparison only. Several entries are dimensionally inconsistent.
pub fn printed_matrices(params: HolonomicParams, x: &PlantState) -> SdcForm {
    let (m, l) = (params.mass, params.spacing);
    let (s, c) = x[4].sin_cos();
    let w = x[5];
    let mut a = DMatrix::zeros(6, 6);
    a[(0, 1)] = 1.0;
    a[(2, 3)] = 1.0;
    a[(4, 5)] = 1.0;
    a[(1, 4)] = 3.0 * l * m * s * w * (-w + 1.0) + 5.0 * l;
    a[(1, 5)] = 3.0 * l * m * c * (2.0 * w - 1.0);
    a[(3, 4)] = l * w * w * c + 3.0 * s;
    a[(3, 5)] = 2.0 * l * w * s;
    let mut b = DMatrix::zeros(6, 2);
    b[(1, 0)] = -l * s;
    b[(3, 0)] = 5.0 * l * c / (6.0 * m);
    b[(3, 1)] = -c / (2.0 * m);
    b[(5, 0)] = -1.0 / (2.0 * m);
    b[(5, 1)] = 1.0 / (2.0 * m);
    SdcForm { a, b }
}

/// Differences between the printed pair and the shipped factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedDiscrepancy {
    /// `‖A_p x + B_p u − f(x, u)‖` for the printed pair.
    pub printed_residual: f64,
    /// The same for the shipped factorization (should be at rounding level).
    pub shipped_residual: f64,
    /// `‖B_p − B‖_max`.
    pub input_matrix_gap: f64,
}

pub fn printed_discrepancy(plant: &SdcPlant, x: &PlantState, u: &[f64; 2]) -> Result<PrintedDiscrepancy> {
    let truth = plant.dynamics(x, u)?;
    let printed = printed_matrices(plant.params(), x);
    let zero = PlantState::zeros();
    let shipped = plant.form(x, &zero)?;
    Ok(PrintedDiscrepancy {
        printed_residual: (printed.apply(x, u) - truth).norm(),
        shipped_residual: (shipped.apply(x, u) - truth).norm(),
        input_matrix_gap: (&printed.b - &shipped.b).amax(),
    })
}
