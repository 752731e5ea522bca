//! SDRE gain on the robot plant, with the shipped weights.

use nalgebra::DVector;
use proptest::prelude::*;

use swarmctl_core::el::{holonomic_model, HolonomicParams};
use swarmctl_core::riccati::{sdre_gain, Weighting};
use swarmctl_core::sdc::{goal_state, sdc_factorize, Factorization, PlantState, SdcPlant};
use swarmctl_core::sim::SimConfig;

fn plant() -> SdcPlant {
    sdc_factorize(holonomic_model(HolonomicParams::default()).unwrap(), Factorization::default()).unwrap()
}

fn u_norm(p: &SdcPlant, w: &Weighting, x: &PlantState, goal: &PlantState) -> (f64, f64) {
    let delta = SimConfig::default().input_scale;
    let a = p.drift_matrix(x, goal).unwrap();
    let b = p.input_matrix(x).unwrap() * delta;
    let e = DVector::from_column_slice((x - goal).as_slice());
    let out = sdre_gain(&a, &b, w, &e, None).unwrap();
    // R u + Bᵀ P e = 0
    let stationarity = (w.r() * &out.u + b.transpose() * &out.care.p * &e).norm();
    (out.u.norm(), stationarity)
}

#[test]
fn doubling_r_shrinks_the_input() {
    let p = plant();
    let goal = goal_state(0.7, 0.6, 0.0);
    let x = PlantState::new(0.31, 0.02, 0.44, -0.01, 0.3, 0.1);
    let w = Weighting::default();
    let w2 = Weighting {
        r_diag: w.r_diag.map(|r| 2.0 * r),
        ..w.clone()
    };
    let (u1, s1) = u_norm(&p, &w, &x, &goal);
    let (u2, s2) = u_norm(&p, &w2, &x, &goal);
    assert!(u2 < u1, "‖u‖ {u1:e} -> {u2:e}");
    assert!(s1 < 1e-10 && s2 < 1e-10);
}

/// Monotonicity in R holds at generic states but is not universal for this
/// two-input plant: at this state a 20% larger R gives a larger norm.
#[test]
fn input_norm_is_not_monotone_everywhere() {
    let p = plant();
    let goal = goal_state(0.7, 0.6, 0.0);
    let x = PlantState::new(0.636053214736646, 0.0, 0.05, 0.06534687988315548, 0.0, 0.0);
    let w = Weighting::default();
    let w2 = Weighting {
        r_diag: w.r_diag.map(|r| 1.2 * r),
        ..w.clone()
    };
    let (u1, _) = u_norm(&p, &w, &x, &goal);
    let (u2, _) = u_norm(&p, &w2, &x, &goal);
    assert!(u2 > u1, "‖u‖ {u1:e} -> {u2:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_for_any_r(
        x in 0.05f64..0.95, y in 0.05f64..0.95, th in -1.0f64..1.0,
        vx in -0.1f64..0.1, vy in -0.1f64..0.1, w in -0.5f64..0.5, k in 0.2f64..4.0,
    ) {
        let p = plant();
        let goal = goal_state(0.7, 0.6, 0.0);
        let xs = PlantState::new(x, vx, y, vy, th, w);
        let base = Weighting::default();
        let scaled = Weighting { r_diag: base.r_diag.map(|r| k * r), ..base };
        let (_, s) = u_norm(&p, &scaled, &xs, &goal);
        prop_assert!(s < 1e-10);
    }
}
