//! Property suites behind `swarmctl verify`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::el::{forward_dynamics, holonomic_model, GeneralizedState, HolonomicParams, HolonomicRobot};
use crate::error::{Error, Result};
use crate::riccati::{care_residual, solve_care, Weighting};
use crate::sdc::{ctrb_rank, degenerate_catalog, generalized_state, sdc_factorize, DegenerateState, PlantState, SdcPlant};
use crate::transform::{build_transform, check_assumptions, decoupled_dynamics, transform_model};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value < tolerance,
            value,
            tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<10} {:<28} {:<4} worst={:<11.3e} tol={:<9.1e} {}",
                self.suite,
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.value,
                c.tolerance,
                c.detail
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Transform,
    Sdc,
    Care,
    All,
}

impl std::str::FromStr for Subsystem {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transform" => Ok(Self::Transform),
            "sdc" => Ok(Self::Sdc),
            "care" => Ok(Self::Care),
            "all" => Ok(Self::All),
            other => Err(crate::error::Error::InvalidConfig(format!("unknown subsystem '{other}'"))),
        }
    }
}

/// Random plant state: positions in the unit square, any heading, moderate rates.
pub fn random_plant_state(rng: &mut ChaCha8Rng) -> PlantState {
    PlantState::new(
        rng.random_range(0.0..1.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.0..1.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.random_range(-2.0..2.0),
    )
}

fn robot(params: HolonomicParams) -> Result<HolonomicRobot> {
    holonomic_model(params)
}

pub fn transform_suite(params: HolonomicParams, samples: usize, seed: u64) -> Result<SuiteReport> {
    let model = robot(params)?;
    let spec = build_transform(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<GeneralizedState> = (0..samples.max(10))
        .map(|_| generalized_state(&random_plant_state(&mut rng)))
        .collect();
    let report = check_assumptions(&model, &states)?;
    let mut checks: Vec<Check> = report
        .checks
        .iter()
        .map(|c| Check {
            name: format!("{} {}", c.id, c.description),
            passed: c.passed,
            value: c.worst_residual,
            tolerance: c.tolerance,
            detail: String::new(),
        })
        .collect();

    let tm = transform_model(&model, &spec);
    let (m, l) = (params.mass, params.spacing);
    let (mut offdiag, mut uu, mut schur, mut accel) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for st in &states {
        let qq = spec.phi(&model, &st.q)?;
        let big = tm.transformed_mass(&qq)?;
        offdiag = offdiag.max(big[(0, 1)].abs()).max(big[(0, 2)].abs());
        uu = uu.max((tm.mass_uu(&qq)?[(0, 0)] - 3.0 * m).abs());
        // Schur block written out by hand for this robot
        let (s, c) = st.q[2].sin_cos();
        let expected = DMatrix::from_row_slice(2, 2, &[3.0 * m, 3.0 * l * m * c, 3.0 * l * m * c, 5.0 * l * l * m - 3.0 * l * l * m * s * s]);
        schur = schur.max((big.view((1, 1), (2, 2)) - &expected).amax());
        let u = DVector::from_column_slice(&[rng.random_range(-1e-3..1e-3), rng.random_range(-1e-5..1e-5)]);
        let direct = forward_dynamics(&model, st, &u)?;
        let via = decoupled_dynamics(&model, &spec, st, &u)?;
        accel = accel.max((direct - &via).amax() / via.amax().max(1.0));
    }
    checks.push(Check::below("offdiag(T'MT)", offdiag, 1e-12, "max |coupling block|"));
    checks.push(Check::below("m_uu = 3m", uu, 1e-15, "exact up to rounding"));
    checks.push(Check::below("Schur block", schur, 1e-12, "vs closed form"));
    checks.push(Check::below("decoupled = forward", accel, 1e-8, "relative accel gap"));
    Ok(SuiteReport {
        suite: "transform",
        checks,
    })
}

/// Relative drift-consistency gap `‖A e + B u − f‖ / max(‖f‖, 1)` and
/// controllability rank at one random state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdcSample {
    pub gap: f64,
    pub rank: usize,
}

pub fn sdc_samples(plant: &SdcPlant, goal: &PlantState, samples: usize, seed: u64, rank_tol: f64) -> Result<Vec<SdcSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let x = random_plant_state(&mut rng);
            let u = [rng.random_range(-1e-3..1e-3), rng.random_range(-1e-5..1e-5)];
            let form = plant.form(&x, goal)?;
            let lhs = form.apply(&(x - goal), &u);
            let rhs = plant.dynamics(&x, &u)?;
            Ok(SdcSample {
                gap: (lhs - rhs).amax() / rhs.amax().max(1.0),
                rank: ctrb_rank(&form.a, &form.b, rank_tol),
            })
        })
        .collect()
}

pub fn sdc_suite(plant: &SdcPlant, goal: &PlantState, samples: usize, seed: u64, rank_tol: f64) -> Result<SuiteReport> {
    let data = sdc_samples(plant, goal, samples, seed, rank_tol)?;
    let gap = data.iter().map(|d| d.gap).fold(0.0, f64::max);
    let min_rank = data.iter().map(|d| d.rank).min().unwrap_or(0);
    Ok(SuiteReport {
        suite: "sdc",
        checks: vec![
            Check::below("A(x)e + B(x)u = f(x,u)", gap, 1e-9, format!("{samples} states")),
            Check {
                name: "ctrb rank".into(),
                passed: min_rank == 6,
                value: min_rank as f64,
                tolerance: 6.0,
                detail: format!("minimum rank over {samples} states (tol {rank_tol:.0e})"),
            },
        ],
    })
}

/// Histogram of drift-consistency gaps over decades `[1e-k-1, 1e-k)`, as CSV
/// with columns `log10_lo, log10_hi, count`. Exact zeros land in the lowest bin.
pub fn residual_histogram_csv(gaps: &[f64]) -> Result<String> {
    const LO: i32 = -18;
    const HI: i32 = 0;
    let mut counts = vec![0usize; (HI - LO + 1) as usize];
    for g in gaps {
        let k = if *g > 0.0 { g.log10().floor() as i32 } else { LO };
        counts[(k.clamp(LO, HI) - LO) as usize] += 1;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["log10_lo", "log10_hi", "count"]).map_err(csv_err)?;
    for (i, c) in counts.iter().enumerate() {
        let lo = LO + i as i32;
        w.write_record([lo.to_string(), (lo + 1).to_string(), c.to_string()]).map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Degenerate-state catalog as CSV: the plant state and its controllability rank.
pub fn degenerate_catalog_csv(catalog: &[DegenerateState]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x1", "dx1", "y1", "dy1", "theta", "dtheta", "rank"]).map_err(csv_err)?;
    for d in catalog {
        let mut rec: Vec<String> = d.state.iter().map(|v| v.to_string()).collect();
        rec.push(d.rank.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Worst postconditions of the Riccati solver on one batch of problems.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CareSweep {
    pub problems: usize,
    pub failures: usize,
    pub worst_residual: f64,
    pub worst_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub worst_abscissa: f64,
}

/// Solves the CARE at random plant states with the given weights and input
/// scale, as the controller does.
pub fn care_sweep(plant: &SdcPlant, goal: &PlantState, weights: &Weighting, input_scale: f64, samples: usize, seed: u64) -> Result<CareSweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CareSweep {
        problems: samples,
        min_eigenvalue: f64::INFINITY,
        worst_abscissa: f64::NEG_INFINITY,
        ..CareSweep::default()
    };
    let r = weights.r();
    for _ in 0..samples {
        let x = random_plant_state(&mut rng);
        let e = x - goal;
        let a = plant.drift_matrix(&x, goal)?;
        let b = plant.input_matrix(&x)? * input_scale;
        let q = weights.q(&DVector::from_column_slice(e.as_slice()));
        match solve_care(&a, &b, &q, &r) {
            Ok(sol) => {
                out.worst_residual = out.worst_residual.max(care_residual(&a, &b, &q, &r, &sol.p));
                out.worst_asymmetry = out.worst_asymmetry.max((&sol.p - sol.p.transpose()).amax());
                out.min_eigenvalue = out.min_eigenvalue.min(sol.p.clone().symmetric_eigenvalues().min());
                out.worst_abscissa = out.worst_abscissa.max(sol.spectral_abscissa());
            }
            Err(_) => out.failures += 1,
        }
    }
    Ok(out)
}

fn analytic_care_checks() -> Result<Vec<Check>> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let scalar = solve_care(&DMatrix::zeros(1, 1), &one, &one, &one)?;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let di = solve_care(&a, &b, &DMatrix::identity(2, 2), &one)?;
    let s3 = 3.0_f64.sqrt();
    let expected = DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]);
    Ok(vec![
        Check::below("scalar P = 1", (scalar.p[(0, 0)] - 1.0).abs(), 1e-10, ""),
        Check::below("double integrator", (&di.p - expected).amax(), 1e-10, "P = [[√3,1],[1,√3]]"),
    ])
}

pub fn care_suite(plant: &SdcPlant, goal: &PlantState, weights: &Weighting, input_scale: f64, samples: usize, seed: u64) -> Result<SuiteReport> {
    let mut checks = analytic_care_checks()?;
    let s = care_sweep(plant, goal, weights, input_scale, samples, seed)?;
    checks.push(Check {
        name: "solver succeeded".into(),
        passed: s.failures == 0,
        value: s.failures as f64,
        tolerance: 0.0,
        detail: format!("failures out of {samples}"),
    });
    checks.push(Check::below("residual", s.worst_residual, 1e-8, format!("{samples} plant states")));
    checks.push(Check::below("asymmetry", s.worst_asymmetry, 1e-12, ""));
    checks.push(Check {
        name: "P positive definite".into(),
        passed: s.min_eigenvalue > 0.0,
        value: s.min_eigenvalue,
        tolerance: 0.0,
        detail: "smallest eigenvalue".into(),
    });
    checks.push(Check::below("closed loop Hurwitz", s.worst_abscissa, 0.0, "largest real part"));
    Ok(SuiteReport { suite: "care", checks })
}

/// Side outputs of the sdc suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcArtifacts {
    pub residual_histogram: String,
    pub degenerate_catalog: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutput {
    pub reports: Vec<SuiteReport>,
    /// Present when the sdc suite ran.
    pub sdc: Option<SdcArtifacts>,
}

/// Runs the requested suites with the shipped plant and weights.
pub fn run(subsystem: Subsystem, samples: usize, seed: u64, rank_tol: f64) -> Result<VerifyOutput> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidConfig(format!("rank tolerance must lie in (0, 1), got {rank_tol}")));
    }
    let params = HolonomicParams::default();
    let cfg = crate::sim::SimConfig::default();
    let goal = PlantState::new(cfg.target[0], 0.0, cfg.target[1], 0.0, cfg.target[2], 0.0);
    let plant = || sdc_factorize(robot(params)?, cfg.factorization.clone());
    let mut out = VerifyOutput { reports: Vec::new(), sdc: None };
    if matches!(subsystem, Subsystem::Transform | Subsystem::All) {
        out.reports.push(transform_suite(params, samples, seed)?);
    }
    if matches!(subsystem, Subsystem::Sdc | Subsystem::All) {
        let plant = plant()?;
        out.reports.push(sdc_suite(&plant, &goal, samples, seed, rank_tol)?);
        let gaps: Vec<f64> = sdc_samples(&plant, &goal, samples, seed, rank_tol)?.iter().map(|d| d.gap).collect();
        out.sdc = Some(SdcArtifacts {
            residual_histogram: residual_histogram_csv(&gaps)?,
            degenerate_catalog: degenerate_catalog_csv(&degenerate_catalog(&plant, &goal, rank_tol))?,
        });
    }
    if matches!(subsystem, Subsystem::Care | Subsystem::All) {
        out.reports.push(care_suite(&plant()?, &goal, &cfg.weights, cfg.input_scale, samples, seed)?);
    }
    Ok(out)
}
