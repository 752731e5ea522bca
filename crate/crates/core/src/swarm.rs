//! Swarm statistics, the hysteresis mean/variance supervisor and the
//! fully-actuated PD baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati::{sdre_gain, Weighting};
use crate::sdc::{PlantState, SdcPlant};

/// Per-component mean state and positional variances (population, 1/N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmStats {
    pub mean: PlantState,
    pub var_x: f64,
    pub var_y: f64,
}

pub fn swarm_stats(states: &[PlantState]) -> Result<SwarmStats> {
    if states.is_empty() {
        return Err(Error::EmptySwarm);
    }
    let n = states.len() as f64;
    let mean = states.iter().fold(PlantState::zeros(), |acc, s| acc + s) / n;
    let var = |k: usize| states.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / n;
    Ok(SwarmStats {
        mean,
        var_x: var(0),
        var_y: var(2),
    })
}

/// Smallest positional variance of `n` packed disks of radius `r`.
pub fn sigma_optimal(n: usize, r: f64) -> f64 {
    0.55 * n as f64 * r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Track,
    Gather,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Track => "TRACK",
            Mode::Gather => "GATHER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisConfig {
    pub sigma_enter: f64,
    pub sigma_exit: f64,
    pub sigma_optimal: f64,
    pub gather_corner: [f64; 2],
    pub target: [f64; 3],
}

impl HysteresisConfig {
    /// Thresholds `σ_opt + 15r²` (enter) and `σ_opt + 2.5r²` (exit).
    pub fn standard(n: usize, r: f64, gather_corner: [f64; 2], target: [f64; 3]) -> Self {
        let opt = sigma_optimal(n, r);
        Self {
            sigma_enter: opt + 15.0 * r * r,
            sigma_exit: opt + 2.5 * r * r,
            sigma_optimal: opt,
            gather_corner,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma_enter, self.sigma_exit, self.sigma_optimal]
            .iter()
            .chain(self.gather_corner.iter())
            .chain(self.target.iter())
            .all(|v| v.is_finite());
        if !finite || !(self.sigma_enter > self.sigma_exit) || self.sigma_exit < self.sigma_optimal {
            return Err(Error::InvalidConfig(format!(
                "hysteresis needs sigma_enter > sigma_exit >= sigma_optimal (got {:.3e}, {:.3e}, {:.3e})",
                self.sigma_enter, self.sigma_exit, self.sigma_optimal
            )));
        }
        Ok(())
    }

    /// Width of the hysteresis band.
    pub fn band(&self) -> f64 {
        self.sigma_enter - self.sigma_exit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorState {
    pub mode_x: Mode,
    pub mode_y: Mode,
    pub goal: [f64; 2],
}

impl SupervisorState {
    pub fn tracking(cfg: &HysteresisConfig) -> Self {
        Self {
            mode_x: Mode::Track,
            mode_y: Mode::Track,
            goal: [cfg.target[0], cfg.target[1]],
        }
    }

    /// Goal as a plant state with zero velocities.
    pub fn goal_state(&self, cfg: &HysteresisConfig) -> PlantState {
        PlantState::new(self.goal[0], 0.0, self.goal[1], 0.0, cfg.target[2], 0.0)
    }
}

fn axis_mode(prev: Mode, variance: f64, cfg: &HysteresisConfig) -> Mode {
    match prev {
        Mode::Track if variance > cfg.sigma_enter => Mode::Gather,
        Mode::Gather if variance < cfg.sigma_exit => Mode::Track,
        other => other,
    }
}

pub fn supervisor_step(stats: &SwarmStats, cfg: &HysteresisConfig, prev: &SupervisorState) -> SupervisorState {
    let mode_x = axis_mode(prev.mode_x, stats.var_x, cfg);
    let mode_y = axis_mode(prev.mode_y, stats.var_y, cfg);
    let pick = |mode: Mode, corner: f64, target: f64| match mode {
        Mode::Track => target,
        Mode::Gather => corner,
    };
    SupervisorState {
        mode_x,
        mode_y,
        goal: [
            pick(mode_x, cfg.gather_corner[0], cfg.target[0]),
            pick(mode_y, cfg.gather_corner[1], cfg.target[1]),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp_x: f64,
    pub kp_y: f64,
    pub kd_x: f64,
    pub kd_y: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp_x: 0.04,
            kp_y: 0.03,
            kd_x: 0.03,
            kd_y: 0.04,
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        if [self.kp_x, self.kp_y, self.kd_x, self.kd_y].iter().all(|g| g.is_finite() && *g > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("PD gains must be positive".into()))
        }
    }
}

/// Global forces `(fx, fy)` of the fully-actuated baseline.
pub fn pd_control(stats: &SwarmStats, sup: &SupervisorState, gains: &PdGains) -> [f64; 2] {
    let m = &stats.mean;
    [
        gains.kp_x * (sup.goal[0] - m[0]) - gains.kd_x * m[1],
        gains.kp_y * (sup.goal[1] - m[2]) - gains.kd_y * m[3],
    ]
}


/// One SDRE evaluation on the mean plant.
#[derive(Debug, Clone, PartialEq)]
pub struct SdreStep {
    /// Input actually broadcast, already multiplied by the input scale.
    pub u: [f64; 2],
    pub error: PlantState,
    pub p: DMatrix<f64>,
    pub care_residual: f64,
}

/// SDRE feedback on the mean state `x̄`, with `A` and `B` frozen at `x̄`.
///
/// The Riccati equation is solved for `B·δ` and the robots receive `δ·u`,
/// where `δ` is the input scale (the sampling time for the shipped runs).
#[derive(Debug, Clone)]
pub struct SdreController {
    plant: SdcPlant,
    weights: Weighting,
    input_scale: f64,
    warm: Option<DMatrix<f64>>,
}

impl SdreController {
    pub fn new(plant: SdcPlant, weights: Weighting, input_scale: f64) -> Result<Self> {
        weights.validate()?;
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::InvalidConfig("input scale must be positive".into()));
        }
        Ok(Self {
            plant,
            weights,
            input_scale,
            warm: None,
        })
    }

    pub fn plant(&self) -> &SdcPlant {
        &self.plant
    }

    pub fn control(&mut self, stats: &SwarmStats, goal: &PlantState) -> Result<SdreStep> {
        let x = stats.mean;
        let e = x - goal;
        let a = self.plant.drift_matrix(&x, goal)?;
        let b = self.plant.input_matrix(&x)? * self.input_scale;
        let ed = DVector::from_column_slice(e.as_slice());
        let out = sdre_gain(&a, &b, &self.weights, &ed, self.warm.as_ref())?;
        self.warm = Some(out.care.p.clone());
        Ok(SdreStep {
            u: [out.u[0] * self.input_scale, out.u[1] * self.input_scale],
            error: e,
            p: out.care.p,
            care_residual: out.care.residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn at(x: f64, y: f64) -> PlantState {
        PlantState::new(x, 0.0, y, 0.0, 0.0, 0.0)
    }

    fn cfg() -> HysteresisConfig {
        HysteresisConfig::standard(4, 0.03, [0.0, 0.0], [0.7, 0.6, 0.0])
    }

    fn stats_with(var_x: f64, var_y: f64) -> SwarmStats {
        SwarmStats {
            mean: PlantState::zeros(),
            var_x,
            var_y,
        }
    }

    #[test]
    fn single_robot_stats() {
        let s = PlantState::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let st = swarm_stats(&[s]).unwrap();
        assert_eq!(st.mean, s);
        assert_eq!((st.var_x, st.var_y), (0.0, 0.0));
    }

    #[test]
    fn symmetric_pair() {
        let st = swarm_stats(&[at(-0.3, 1.0), at(0.3, 1.0)]).unwrap();
        assert_relative_eq!(st.mean[0], 0.0);
        assert_relative_eq!(st.var_x, 0.09, epsilon = 1e-15);
        assert_eq!(st.var_y, 0.0);
    }

    #[test]
    fn empty_swarm() {
        assert!(matches!(swarm_stats(&[]), Err(Error::EmptySwarm)));
    }

    proptest! {
        #[test]
        fn stats_match_two_pass(xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12)) {
            let states: Vec<PlantState> = xs.iter().map(|(x, y)| at(*x, *y)).collect();
            let st = swarm_stats(&states).unwrap();
            let n = xs.len() as f64;
            let mx: f64 = xs.iter().map(|p| p.0).sum::<f64>() / n;
            let sq: f64 = xs.iter().map(|p| p.0 * p.0).sum::<f64>() / n;
            prop_assert!((st.mean[0] - mx).abs() < 1e-12);
            prop_assert!((st.var_x - (sq - mx * mx)).abs() < 1e-9);
            prop_assert!(st.var_x >= 0.0 && st.var_y >= 0.0);
        }

        #[test]
        fn supervisor_switches_need_a_full_band(vars in prop::collection::vec(0.0f64..0.03, 1..200)) {
            let c = cfg();
            let mut sup = SupervisorState::tracking(&c);
            let mut last_switch: Option<f64> = None;
            for v in vars {
                let next = supervisor_step(&stats_with(v, 0.0), &c, &sup);
                if next.mode_x != sup.mode_x {
                    if let Some(prev_v) = last_switch {
                        prop_assert!((v - prev_v).abs() >= c.band());
                    }
                    last_switch = Some(v);
                }
                prop_assert_eq!(next.goal[0], match next.mode_x { Mode::Track => 0.7, Mode::Gather => 0.0 });
                sup = next;
            }
        }
    }

    #[test]
    fn thresholds() {
        let c = cfg();
        assert_relative_eq!(c.sigma_optimal, 0.55 * 4.0 * 0.0009, epsilon = 1e-15);
        assert_relative_eq!(c.sigma_enter, c.sigma_optimal + 0.0135, epsilon = 1e-15);
        assert_relative_eq!(c.sigma_exit, c.sigma_optimal + 0.00225, epsilon = 1e-15);
        assert!(c.validate().is_ok());
        let mut bad = c;
        bad.sigma_exit = bad.sigma_enter + 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn supervisor_cases() {
        let c = cfg();
        let track = SupervisorState::tracking(&c);
        let low = supervisor_step(&stats_with(0.001, 0.001), &c, &track);
        assert_eq!((low.mode_x, low.goal[0]), (Mode::Track, 0.7));
        let high = supervisor_step(&stats_with(0.05, 0.001), &c, &track);
        assert_eq!((high.mode_x, high.goal[0]), (Mode::Gather, 0.0));
        assert_eq!(high.mode_y, Mode::Track);
        let mid = 0.5 * (c.sigma_enter + c.sigma_exit);
        let held = supervisor_step(&stats_with(mid, 0.0), &c, &high);
        assert_eq!(held.mode_x, Mode::Gather);
        let held = supervisor_step(&stats_with(mid, 0.0), &c, &track);
        assert_eq!(held.mode_x, Mode::Track);
    }

    fn controller() -> SdreController {
        let model = crate::el::holonomic_model(Default::default()).unwrap();
        let plant = crate::sdc::sdc_factorize(model, Default::default()).unwrap();
        SdreController::new(plant, Weighting::default(), 0.01).unwrap()
    }

    #[test]
    fn sdre_zero_at_goal() {
        let mut c = controller();
        let goal = crate::sdc::goal_state(0.7, 0.6, 0.0);
        let st = swarm_stats(&[goal]).unwrap();
        let out = c.control(&st, &goal).unwrap();
        assert_eq!(out.u, [0.0, 0.0]);
    }

    #[test]
    fn sdre_pushes_toward_goal() {
        let mut c = controller();
        let goal = crate::sdc::goal_state(0.7, 0.6, 0.0);
        let st = swarm_stats(&[at(0.7, 0.4)]).unwrap();
        let out = c.control(&st, &goal).unwrap();
        // below the goal at θ = 0: normal force along +y must be positive
        let (m, l) = (0.01, 0.02);
        let f = 5.0 * out.u[0] / (6.0 * m) - out.u[1] / (2.0 * l * m);
        assert!(f > 0.0, "normal force {f}");
        assert!(out.care_residual < 1e-8);
        assert!(out.p.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn bad_input_scale() {
        let model = crate::el::holonomic_model(Default::default()).unwrap();
        let plant = crate::sdc::sdc_factorize(model, Default::default()).unwrap();
        assert!(SdreController::new(plant, Weighting::default(), 0.0).is_err());
    }

    #[test]
    fn pd_cases() {
        let c = cfg();
        let mut sup = SupervisorState::tracking(&c);
        let g = PdGains::default();
        let at_goal = swarm_stats(&[at(0.7, 0.6)]).unwrap();
        assert_eq!(pd_control(&at_goal, &sup, &g), [0.0, 0.0]);
        sup.goal = [0.0, 0.0];
        let displaced = swarm_stats(&[at(1.0, 0.0)]).unwrap();
        assert_relative_eq!(pd_control(&displaced, &sup, &g)[0], -0.04);
        let moving = swarm_stats(&[PlantState::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0)]).unwrap();
        assert_relative_eq!(pd_control(&moving, &sup, &g)[0], -0.03);
        assert!(g.validate().is_ok());
    }
}
