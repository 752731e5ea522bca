//! Fixed-step stochastic simulation of a broadcast-controlled swarm in a
//! walled arena.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::el::{
    forward_dynamics, holonomic_model, rk4_step, solve_mass, ElModel, GeneralizedState, HolonomicParams,
    HolonomicRobot, MAX_MASS_CONDITION,
};
use crate::error::{Error, Result};
use crate::riccati::{lyapunov_monitor, LyapunovSample, Weighting};
use crate::sdc::{generalized_state, plant_state, sdc_factorize, Factorization, PlantState};
use crate::swarm::{
    pd_control, supervisor_step, swarm_stats, HysteresisConfig, PdGains, SdreController, SupervisorState, SwarmStats,
};

/// Any state component above this aborts the run.
pub const BLOWUP_LIMIT: f64 = 1e6;

pub const MAX_COLLISION_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }
}

impl Arena {
    pub fn validate(&self, radius: f64) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max - self.x_min > 2.0 * radius
            && self.y_max - self.y_min > 2.0 * radius;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("arena must be wider than one robot in both axes".into()))
        }
    }

    /// True when `(x, y)` lies inside the arena grown by `margin`.
    pub fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.x_min - margin && x <= self.x_max + margin && y >= self.y_min - margin && y <= self.y_max + margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Sdre,
    Pd,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdre" => Ok(Self::Sdre),
            "pd" => Ok(Self::Pd),
            other => Err(Error::InvalidConfig(format!("unknown controller '{other}'"))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sdre => "sdre",
            Self::Pd => "pd",
        })
    }
}

/// Supervisor thresholds; anything left out follows the standard rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HysteresisOverrides {
    pub sigma_enter: Option<f64>,
    pub sigma_exit: Option<f64>,
    pub gather_corner: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_robots: usize,
    pub dt: f64,
    pub duration: f64,
    pub arena: Arena,
    /// Velocity noise intensity; each step adds `σ √dt N(0,1)` per velocity.
    pub noise_sigma: f64,
    pub seed: u64,
    pub radius: f64,
    pub collisions: bool,
    pub controller: ControllerKind,
    pub target: [f64; 3],
    pub params: HolonomicParams,
    pub weights: Weighting,
    pub gains: PdGains,
    pub factorization: Factorization,
    pub input_scale: f64,
    pub hysteresis: HysteresisOverrides,
    /// Half-width of the uniform initial heading distribution (rad).
    pub initial_heading: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_robots: 4,
            dt: 0.01,
            duration: 60.0,
            arena: Arena::default(),
            noise_sigma: 5e-4,
            seed: 0,
            radius: 0.03,
            collisions: true,
            controller: ControllerKind::Sdre,
            target: [0.7, 0.6, 0.0],
            params: HolonomicParams::default(),
            weights: Weighting::default(),
            gains: PdGains::default(),
            factorization: Factorization::default(),
            input_scale: 0.01,
            hysteresis: HysteresisOverrides::default(),
            initial_heading: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.n_robots == 0 {
            return bad("n_robots must be at least 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad("duration must be non-negative");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return bad("input_scale must be positive");
        }
        if !(self.initial_heading.is_finite() && self.initial_heading >= 0.0) {
            return bad("initial_heading must be non-negative");
        }
        if !self.target.iter().all(|v| v.is_finite()) {
            return bad("target must be finite");
        }
        self.arena.validate(self.radius)?;
        self.params.validate()?;
        self.weights.validate()?;
        self.gains.validate()?;
        self.hysteresis_config().validate()
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn hysteresis_config(&self) -> HysteresisConfig {
        let corner = self
            .hysteresis
            .gather_corner
            .unwrap_or([self.arena.x_min, self.arena.y_min]);
        let mut cfg = HysteresisConfig::standard(self.n_robots, self.radius, corner, self.target);
        if let Some(v) = self.hysteresis.sigma_enter {
            cfg.sigma_enter = v;
        }
        if let Some(v) = self.hysteresis.sigma_exit {
            cfg.sigma_exit = v;
        }
        cfg
    }
}

/// What the controller sends to every robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actuation {
    /// `u = (u1, u2)` through the input matrix `G(q)`.
    Inputs([f64; 2]),
    /// A planar force at each robot's centre of mass (fully actuated baseline).
    ComForce([f64; 2]),
}

impl Actuation {
    pub fn values(&self) -> [f64; 2] {
        match *self {
            Actuation::Inputs(u) | Actuation::ComForce(u) => u,
        }
    }
}

/// Generalized force produced by `act` on a robot at heading `θ`.
pub fn generalized_force(model: &HolonomicRobot, theta: f64, act: &Actuation) -> Vector3<f64> {
    match *act {
        Actuation::Inputs(u) => {
            let g = model.input_matrix(&DVector::from_column_slice(&[0.0, 0.0, theta]));
            let f = g * DVector::from_column_slice(&u);
            Vector3::new(f[0], f[1], f[2])
        }
        Actuation::ComForce([fx, fy]) => {
            // Jᵀf for the centre of mass (x1 + L cos θ, y1 + L sin θ)
            let l = model.params.spacing;
            let (s, c) = theta.sin_cos();
            Vector3::new(fx, fy, -l * s * fx + l * c * fy)
        }
    }
}

/// `q̈` of one robot under `act`.
pub fn robot_acceleration(model: &HolonomicRobot, x: &PlantState, act: &Actuation) -> Result<Vector3<f64>> {
    let state = generalized_state(x);
    let acc = match act {
        Actuation::Inputs(u) => forward_dynamics(model, &state, &DVector::from_column_slice(u))?,
        Actuation::ComForce(_) => {
            let tau = generalized_force(model, x[4], act);
            let rhs = DVector::from_column_slice(tau.as_slice())
                - model.coriolis(&state.q, &state.qdot) * &state.qdot
                - model.potential_grad(&state.q);
            solve_mass(&model.mass_matrix(&state.q), &rhs, MAX_MASS_CONDITION)?
        }
    };
    Ok(Vector3::new(acc[0], acc[1], acc[2]))
}

/// Clamps the robot centre into `[min + r, max − r]` and zeroes the
/// wall-normal velocity on contact.
pub fn apply_wall_constraints(x: &PlantState, arena: &Arena, radius: f64) -> PlantState {
    let mut out = *x;
    let limits = [(0, arena.x_min, arena.x_max), (2, arena.y_min, arena.y_max)];
    for (k, lo, hi) in limits {
        if out[k] < lo + radius {
            out[k] = lo + radius;
            out[k + 1] = 0.0;
        } else if out[k] > hi - radius {
            out[k] = hi - radius;
            out[k + 1] = 0.0;
        }
    }
    out
}

/// Pushes overlapping disks apart symmetrically to exactly `2r` and removes
/// the approaching part of their relative normal velocity. Returns the number
/// of passes used.
pub fn resolve_collisions(states: &mut [PlantState], radius: f64) -> usize {
    let min_dist = 2.0 * radius;
    for pass in 0..MAX_COLLISION_PASSES {
        let mut moved = false;
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                let dx = states[j][0] - states[i][0];
                let dy = states[j][2] - states[i][2];
                let d = dx.hypot(dy);
                if d >= min_dist {
                    continue;
                }
                moved = true;
                // coincident centres: separate along x
                let (nx, ny) = if d > 1e-12 { (dx / d, dy / d) } else { (1.0, 0.0) };
                let push = 0.5 * (min_dist - d);
                states[i][0] -= push * nx;
                states[i][2] -= push * ny;
                states[j][0] += push * nx;
                states[j][2] += push * ny;
                let vn = (states[j][1] - states[i][1]) * nx + (states[j][3] - states[i][3]) * ny;
                if vn < 0.0 {
                    let h = 0.5 * vn;
                    states[i][1] += h * nx;
                    states[i][3] += h * ny;
                    states[j][1] -= h * nx;
                    states[j][3] -= h * ny;
                }
            }
        }
        if !moved {
            return pass;
        }
    }
    MAX_COLLISION_PASSES
}

/// Work and effort added by one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepEnergy {
    pub work: f64,
    pub effort: f64,
}

/// Advances every robot by one semi-implicit Euler step with velocity noise,
/// then applies walls and collisions. Energy uses the pre-step velocities.
pub fn step(
    model: &HolonomicRobot,
    robots: &mut [PlantState],
    act: &Actuation,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepEnergy> {
    let dt = cfg.dt;
    let noise = cfg.noise_sigma * dt.sqrt();
    let u = act.values();
    let mut energy = StepEnergy {
        work: 0.0,
        effort: (u[0] * u[0] + u[1] * u[1]) * dt,
    };
    for x in robots.iter_mut() {
        let tau = generalized_force(model, x[4], act);
        energy.work += (tau[0] * x[1] + tau[1] * x[3] + tau[2] * x[5]).abs() * dt;
        let acc = robot_acceleration(model, x, act)?;
        for (k, row) in [1, 3, 5].into_iter().enumerate() {
            x[row] += acc[k] * dt;
        }
        for row in [1, 3, 5] {
            let z: f64 = rng.sample(StandardNormal);
            x[row] += noise * z;
        }
        for row in [0, 2, 4] {
            x[row] += x[row + 1] * dt;
        }
        *x = apply_wall_constraints(x, &cfg.arena, cfg.radius);
    }
    if cfg.collisions {
        resolve_collisions(robots, cfg.radius);
        for x in robots.iter_mut() {
            *x = apply_wall_constraints(x, &cfg.arena, cfg.radius);
        }
    }
    Ok(energy)
}

fn check_blowup(robots: &[PlantState], t: f64) -> Result<()> {
    let magnitude = robots.iter().map(|x| x.amax()).fold(0.0, f64::max);
    if !(magnitude <= BLOWUP_LIMIT) {
        return Err(Error::StateBlowup { t, magnitude });
    }
    Ok(())
}

/// Uniform positions with a `2r` margin, zero velocities, uniform heading.
pub fn initial_robots(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<PlantState> {
    let m = 2.0 * cfg.radius;
    let a = &cfg.arena;
    let h = cfg.initial_heading;
    let mut robots: Vec<PlantState> = (0..cfg.n_robots)
        .map(|_| {
            let x = rng.random_range(a.x_min + m..=a.x_max - m);
            let y = rng.random_range(a.y_min + m..=a.y_max - m);
            let th = if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
            PlantState::new(x, 0.0, y, 0.0, th, 0.0)
        })
        .collect();
    if cfg.collisions {
        resolve_collisions(&mut robots, cfg.radius);
        for x in robots.iter_mut() {
            *x = apply_wall_constraints(x, a, cfg.radius);
        }
    }
    robots
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub robots: Vec<PlantState>,
    pub stats: SwarmStats,
    pub supervisor: SupervisorState,
    /// Broadcast input applied from this sample to the next.
    pub u: [f64; 2],
    /// `eᵀPe` for SDRE runs, NaN for the baseline.
    pub lyapunov: f64,
    pub care_residual: f64,
    /// Cumulative energies up to `t`.
    pub energy_work: f64,
    pub energy_effort: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted { reason: String },
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub config: SimConfig,
    pub samples: Vec<Sample>,
    /// Lyapunov diagnostics, one per sample (SDRE runs with ≥ 3 samples).
    pub lyapunov: Vec<LyapunovSample>,
    pub status: RunStatus,
}

impl SimTrace {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trace always holds the initial sample")
    }

    pub fn energy_work(&self) -> f64 {
        self.last().energy_work
    }

    pub fn energy_effort(&self) -> f64 {
        self.last().energy_effort
    }

    /// Distance of the final mean position from the target.
    pub fn final_distance(&self) -> f64 {
        let m = &self.last().stats.mean;
        (m[0] - self.config.target[0]).hypot(m[2] - self.config.target[1])
    }

    pub fn mode_switches(&self) -> usize {
        self.samples
            .windows(2)
            .map(|w| {
                usize::from(w[0].supervisor.mode_x != w[1].supervisor.mode_x)
                    + usize::from(w[0].supervisor.mode_y != w[1].supervisor.mode_y)
            })
            .sum()
    }

    /// `dL/dt` per sample (NaN when unavailable).
    pub fn lyapunov_rate(&self, k: usize) -> f64 {
        self.lyapunov.get(k).map_or(f64::NAN, |s| s.rate)
    }

    /// Flagged Lyapunov samples in the final `fraction` of the run.
    pub fn late_lyapunov_flags(&self, fraction: f64) -> usize {
        let start = ((1.0 - fraction.clamp(0.0, 1.0)) * self.lyapunov.len() as f64) as usize;
        self.lyapunov[start..].iter().filter(|s| s.flagged).count()
    }

    pub fn lyapunov_flags(&self) -> usize {
        self.lyapunov.iter().filter(|s| s.flagged).count()
    }
}

enum Control {
    Sdre(Box<SdreController>),
    Pd(PdGains),
}

struct Decision {
    act: Actuation,
    lyapunov: f64,
    residual: f64,
    error: PlantState,
    p: Option<DMatrix<f64>>,
}

impl Control {
    fn decide(&mut self, stats: &SwarmStats, sup: &SupervisorState, hyst: &HysteresisConfig) -> Result<Decision> {
        let goal = sup.goal_state(hyst);
        match self {
            Control::Sdre(c) => {
                let out = c.control(stats, &goal)?;
                let e = DVector::from_column_slice(out.error.as_slice());
                Ok(Decision {
                    act: Actuation::Inputs(out.u),
                    lyapunov: e.dot(&(&out.p * &e)),
                    residual: out.care_residual,
                    error: out.error,
                    p: Some(out.p),
                })
            }
            Control::Pd(g) => Ok(Decision {
                act: Actuation::ComForce(pd_control(stats, sup, g)),
                lyapunov: f64::NAN,
                residual: f64::NAN,
                error: stats.mean - goal,
                p: None,
            }),
        }
    }
}

/// Runs the supervisor/controller/step loop. Configuration errors are
/// returned as `Err`; runtime failures end the run early with the partial
/// trace and an `Aborted` status.
pub fn run_scenario(cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let model = holonomic_model(cfg.params)?;
    let hyst = cfg.hysteresis_config();
    let mut control = match cfg.controller {
        ControllerKind::Sdre => {
            let plant = sdc_factorize(model, cfg.factorization.clone())?;
            Control::Sdre(Box::new(SdreController::new(plant, cfg.weights.clone(), cfg.input_scale)?))
        }
        ControllerKind::Pd => Control::Pd(cfg.gains),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut robots = initial_robots(cfg, &mut rng);
    let mut sup = SupervisorState::tracking(&hyst);
    let (mut work, mut effort) = (0.0, 0.0);
    let mut samples = Vec::with_capacity(cfg.steps() + 1);
    let mut errors = Vec::new();
    let mut ps = Vec::new();
    let mut status = RunStatus::Completed;

    for k in 0..=cfg.steps() {
        let t = k as f64 * cfg.dt;
        let outcome = (|| -> Result<Decision> {
            check_blowup(&robots, t)?;
            let stats = swarm_stats(&robots)?;
            sup = supervisor_step(&stats, &hyst, &sup);
            let d = control.decide(&stats, &sup, &hyst)?;
            samples.push(Sample {
                t,
                robots: robots.clone(),
                stats,
                supervisor: sup,
                u: d.act.values(),
                lyapunov: d.lyapunov,
                care_residual: d.residual,
                energy_work: work,
                energy_effort: effort,
            });
            Ok(d)
        })();
        let d = match outcome {
            Ok(d) => d,
            Err(e) => {
                status = RunStatus::Aborted { reason: e.to_string() };
                break;
            }
        };
        if let Some(p) = d.p {
            errors.push(DVector::from_column_slice(d.error.as_slice()));
            ps.push(p);
        }
        if k == cfg.steps() {
            break;
        }
        match step(&model, &mut robots, &d.act, cfg, &mut rng) {
            Ok(en) => {
                work += en.work;
                effort += en.effort;
            }
            Err(e) => {
                status = RunStatus::Aborted { reason: e.to_string() };
                break;
            }
        }
    }
    if samples.is_empty() {
        // the initial state itself was rejected
        return Err(Error::InvalidConfig(match status {
            RunStatus::Aborted { reason } => reason,
            RunStatus::Completed => "no samples".into(),
        }));
    }
    let lyapunov = if ps.len() >= 3 {
        lyapunov_monitor(cfg.dt, &errors, &ps)?
    } else {
        Vec::new()
    };
    Ok(SimTrace {
        config: cfg.clone(),
        samples,
        lyapunov,
        status,
    })
}

/// Deterministic reference for one robot under an open-loop input: classical
/// RK4 on the forward dynamics.
pub fn rk4_reference<F>(model: &HolonomicRobot, x0: &PlantState, dt: f64, steps: usize, mut input: F) -> Result<Vec<PlantState>>
where
    F: FnMut(f64) -> [f64; 2],
{
    let mut state = generalized_state(x0);
    let mut out = vec![*x0];
    for k in 0..steps {
        let u = DVector::from_column_slice(&input(k as f64 * dt));
        state = rk4_step(&state, dt, |s: &GeneralizedState| forward_dynamics(model, s, &u))?;
        out.push(plant_state(&state)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> HolonomicRobot {
        holonomic_model(HolonomicParams::default()).unwrap()
    }

    fn quiet() -> SimConfig {
        SimConfig {
            noise_sigma: 0.0,
            collisions: false,
            ..SimConfig::default()
        }
    }

    #[test]
    fn rest_without_noise_or_input_is_fixed() {
        let cfg = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = PlantState::new(0.4, 0.0, 0.5, 0.0, 0.3, 0.0);
        let mut robots = vec![x];
        let e = step(&model(), &mut robots, &Actuation::Inputs([0.0, 0.0]), &cfg, &mut rng).unwrap();
        assert_eq!(robots[0], x);
        assert_eq!(e, StepEnergy::default());
    }

    #[test]
    fn first_step_work_is_zero_at_rest() {
        let cfg = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut robots = vec![PlantState::new(0.4, 0.0, 0.5, 0.0, 0.0, 0.0)];
        let e = step(&model(), &mut robots, &Actuation::Inputs([1e-4, 0.0]), &cfg, &mut rng).unwrap();
        assert_eq!(e.work, 0.0);
        assert_relative_eq!(e.effort, 1e-8 * cfg.dt);
    }

    #[test]
    fn euler_matches_rk4_to_first_order() {
        let m = model();
        let x0 = PlantState::new(0.5, 0.01, 0.5, -0.02, 0.2, 0.3);
        let input = |t: f64| [1e-4 * (2.0 * t).sin(), 2e-6 * t.cos()];
        let reference = rk4_reference(&m, &x0, 1e-4, 10_000, input).unwrap();
        let reference = reference.last().unwrap();
        let mut errs = Vec::new();
        for dt in [0.01, 0.005] {
            let cfg = SimConfig {
                dt,
                arena: Arena {
                    x_min: -10.0,
                    x_max: 10.0,
                    y_min: -10.0,
                    y_max: 10.0,
                },
                ..quiet()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut robots = vec![x0];
            let steps = (1.0 / dt).round() as usize;
            for k in 0..steps {
                step(&m, &mut robots, &Actuation::Inputs(input(k as f64 * dt)), &cfg, &mut rng).unwrap();
            }
            errs.push((robots[0] - reference).amax());
        }
        assert!(errs[0] < 0.05, "{errs:?}");
        // halving dt roughly halves the error
        let ratio = errs[0] / errs[1];
        assert!((1.6..2.5).contains(&ratio), "{errs:?}");
    }

    #[test]
    fn com_force_does_not_turn_the_robot() {
        let m = model();
        let x = PlantState::new(0.0, 0.0, 0.0, 0.0, 0.7, 0.0);
        let acc = robot_acceleration(&m, &x, &Actuation::ComForce([0.03, -0.01])).unwrap();
        assert!(acc[2].abs() < 1e-12);
        // centre of mass moves as a point of mass 3m
        assert_relative_eq!(acc[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(acc[1] * 3.0 * 0.01, -0.01, epsilon = 1e-12);
    }

    #[test]
    fn walls() {
        let a = Arena::default();
        let r = 0.03;
        let inside = PlantState::new(0.5, 1.0, 0.5, -1.0, 0.0, 0.0);
        assert_eq!(apply_wall_constraints(&inside, &a, r), inside);
        let out = apply_wall_constraints(&PlantState::new(-0.01, -1.0, 0.5, 0.2, 0.0, 0.0), &a, r);
        assert_eq!((out[0], out[1], out[3]), (r, 0.0, 0.2));
        let corner = apply_wall_constraints(&PlantState::new(1.2, 2.0, 1.3, 3.0, 0.0, 0.0), &a, r);
        assert_eq!((corner[0], corner[1], corner[2], corner[3]), (1.0 - r, 0.0, 1.0 - r, 0.0));
    }

    #[test]
    fn collision_pair() {
        let r = 0.03;
        let mut s = vec![
            PlantState::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
            PlantState::new(r, -1.0, 0.0, 0.0, 0.0, 0.0),
        ];
        resolve_collisions(&mut s, r);
        assert_relative_eq!(s[0][0], -r / 2.0, epsilon = 1e-15);
        assert_relative_eq!(s[1][0], 1.5 * r, epsilon = 1e-15);
        assert_relative_eq!(s[0][1], 0.0);
        assert_relative_eq!(s[1][1], 0.0);
        let before = s.clone();
        assert_eq!(resolve_collisions(&mut s, r), 0);
        assert_eq!(s, before);
    }

    #[test]
    fn zero_duration_and_determinism() {
        let cfg = SimConfig {
            duration: 0.0,
            ..SimConfig::default()
        };
        let tr = run_scenario(&cfg).unwrap();
        assert_eq!(tr.samples.len(), 1);
        let cfg = SimConfig {
            duration: 0.5,
            seed: 7,
            ..SimConfig::default()
        };
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.status, RunStatus::Completed);
        assert_eq!(a.samples.len(), 51);
    }

    #[test]
    fn energies_never_decrease() {
        for controller in [ControllerKind::Sdre, ControllerKind::Pd] {
            let cfg = SimConfig {
                duration: 2.0,
                controller,
                ..SimConfig::default()
            };
            let tr = run_scenario(&cfg).unwrap();
            for w in tr.samples.windows(2) {
                assert!(w[1].energy_work >= w[0].energy_work);
                assert!(w[1].energy_effort >= w[0].energy_effort);
            }
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = SimConfig {
            n_robots: 0,
            ..SimConfig::default()
        };
        assert!(run_scenario(&cfg).is_err());
        let cfg = SimConfig {
            dt: 0.0,
            ..SimConfig::default()
        };
        assert!(run_scenario(&cfg).is_err());
    }

    #[test]
    fn blowup_aborts_with_partial_trace() {
        let cfg = SimConfig {
            duration: 1.0,
            noise_sigma: 1e9,
            arena: Arena {
                x_min: -1e5,
                x_max: 1e5,
                y_min: -1e5,
                y_max: 1e5,
            },
            controller: ControllerKind::Pd,
            ..SimConfig::default()
        };
        let tr = run_scenario(&cfg).unwrap();
        assert!(matches!(tr.status, RunStatus::Aborted { .. }));
        assert!(tr.samples.len() < 101);
    }
}
