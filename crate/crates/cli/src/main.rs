mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use swarmctl_core::scenario::{Overrides, Scenario};
use swarmctl_core::sim::{run_scenario, ControllerKind, RunStatus, SimTrace};
use swarmctl_core::sdc::RANK_TOL;
use swarmctl_core::trace::{
    compare, compare_metrics, median, read_trace, trace_metrics, write_trace, Comparison, RunSummary, TraceMetrics,
    SETTLING_BAND,
};
use swarmctl_core::verify::{self, Subsystem};

#[derive(Parser)]
#[command(name = "swarmctl", version, about = "SDRE broadcast control of underactuated robot swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, one simulation per seed.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write SVG plots next to each trace.
        #[arg(long)]
        plot: bool,
    },
    /// Run property suites: transform, sdc, care or all.
    Verify {
        #[arg(default_value = "all")]
        subsystem: Subsystem,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative singular-value tolerance of the controllability rank test.
        #[arg(long, default_value_t = RANK_TOL)]
        rank_tol: f64,
        /// Directory for the sdc residual histogram and degenerate-state catalog.
        #[arg(long, default_value = "out/verify")]
        out: PathBuf,
    },
    /// Compare two traces, two run summaries, or two directories of per-seed
    /// traces; `b` is the reference.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Serialize)]
struct SweepRow {
    seed: u64,
    exit: String,
    final_distance: f64,
    final_theta: f64,
    energy_work: f64,
    energy_effort: f64,
    mode_switches: usize,
    late_lyapunov_flags: usize,
}

#[derive(Serialize)]
struct SweepSummary {
    scenario: String,
    controller: String,
    runs: usize,
    aborted: usize,
    median_final_distance: f64,
    median_energy_work: f64,
    median_energy_effort: f64,
    rows: Vec<SweepRow>,
}

fn stem(scenario: &Scenario, trace: &SimTrace) -> String {
    format!("{}_{}_seed{}", scenario.name, trace.config.controller, trace.config.seed)
}

fn write_run(dir: &Path, scenario: &Scenario, trace: &SimTrace) -> Result<RunSummary> {
    let stem = stem(scenario, trace);
    let csv = dir.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
    write_trace(trace, std::io::BufWriter::new(file))?;
    let summary = RunSummary::from_trace(trace);
    fs::write(dir.join(format!("{stem}_summary.toml")), summary.to_toml()?)?;
    if scenario.plot {
        for (kind, svg) in plot::trace_plots(trace) {
            fs::write(dir.join(format!("{stem}_{kind}.svg")), svg)?;
        }
    }
    Ok(summary)
}

fn run(path: &Path, overrides: Overrides) -> Result<bool> {
    let mut scenario = Scenario::load(path)?;
    scenario.apply(&overrides)?;
    fs::create_dir_all(&scenario.out_dir).with_context(|| format!("creating {}", scenario.out_dir.display()))?;
    let traces: Vec<_> = (0..scenario.seeds)
        .into_par_iter()
        .map(|k| run_scenario(&scenario.run_config(k)))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for trace in &traces {
        let s = write_run(&scenario.out_dir, &scenario, trace)?;
        println!(
            "seed {:>4}  {:<9} dist={:.4} m  theta={:+.4}  work={:.4e} J  effort={:.4e}  switches={}  late L flags={}",
            s.seed, s.exit, s.final_distance, s.final_mean[2], s.energy_work, s.energy_effort, s.mode_switches, s.late_lyapunov_flags
        );
        if let Some(reason) = &s.abort_reason {
            eprintln!("seed {} aborted: {reason}", s.seed);
        }
        rows.push(SweepRow {
            seed: s.seed,
            exit: s.exit,
            final_distance: s.final_distance,
            final_theta: s.final_mean[2],
            energy_work: s.energy_work,
            energy_effort: s.energy_effort,
            mode_switches: s.mode_switches,
            late_lyapunov_flags: s.late_lyapunov_flags,
        });
    }
    let col = |f: fn(&SweepRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let aborted = traces.iter().filter(|t| t.status != RunStatus::Completed).count();
    let sweep = SweepSummary {
        scenario: scenario.name.clone(),
        controller: scenario.sim.controller.to_string(),
        runs: rows.len(),
        aborted,
        median_final_distance: col(|r| r.final_distance),
        median_energy_work: col(|r| r.energy_work),
        median_energy_effort: col(|r| r.energy_effort),
        rows,
    };
    println!(
        "median over {} runs: dist={:.4} m  work={:.4e} J  effort={:.4e}",
        sweep.runs, sweep.median_final_distance, sweep.median_energy_work, sweep.median_energy_effort
    );
    let sweep_path = scenario
        .out_dir
        .join(format!("{}_{}_sweep.json", scenario.name, scenario.sim.controller));
    fs::write(&sweep_path, serde_json::to_string_pretty(&sweep)?)?;
    fs::write(scenario.out_dir.join(format!("{}_resolved.toml", scenario.name)), scenario.to_toml()?)?;
    Ok(aborted == 0)
}

fn verify_cmd(subsystem: Subsystem, samples: usize, seed: u64, rank_tol: f64, out: &Path) -> Result<bool> {
    let result = verify::run(subsystem, samples, seed, rank_tol)?;
    if let Some(sdc) = &result.sdc {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(out.join("sdc_residual_histogram.csv"), &sdc.residual_histogram)?;
        fs::write(out.join("sdc_degenerate_catalog.csv"), &sdc.degenerate_catalog)?;
        println!("sdc csv written to {}", out.display());
    }
    let mut ok = true;
    for r in &result.reports {
        print!("{r}");
        ok &= r.passed();
    }
    println!("{}", if ok { "verify: all checks passed" } else { "verify: FAILED" });
    Ok(ok)
}

fn load_metrics(path: &Path) -> Result<TraceMetrics> {
    if path.extension().is_some_and(|e| e == "toml") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(RunSummary::from_toml(&text)?.metrics);
    }
    Ok(trace_metrics(&load_rows(path)?, SETTLING_BAND)?)
}

fn load_rows(path: &Path) -> Result<Vec<swarmctl_core::trace::TraceRow>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_trace(std::io::BufReader::new(f))?)
}

/// `seedN` key of a per-seed trace file name.
fn seed_key(path: &Path) -> Option<String> {
    let name = path.file_stem()?.to_str()?;
    let idx = name.rfind("_seed")?;
    Some(name[idx + 1..].to_string())
}

fn traces_in(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            if let Some(k) = seed_key(&p) {
                out.insert(k, p);
            }
        }
    }
    Ok(out)
}

fn compare_cmd(a: &Path, b: &Path) -> Result<()> {
    if a.is_dir() != b.is_dir() {
        bail!("compare needs two files or two directories");
    }
    if !a.is_dir() {
        println!("{}", compare_metrics(load_metrics(a)?, load_metrics(b)?)?);
        return Ok(());
    }
    let (ta, tb) = (traces_in(a)?, traces_in(b)?);
    let mut results: Vec<(String, Comparison)> = Vec::new();
    for (key, pa) in &ta {
        if let Some(pb) = tb.get(key) {
            results.push((key.clone(), compare(&load_rows(pa)?, &load_rows(pb)?)?));
        }
    }
    if results.is_empty() {
        bail!(swarmctl_core::Error::IncompatibleTrace("no traces with matching seeds".into()));
    }
    for (key, c) in &results {
        println!(
            "{key:<10} work a/b={:.4} ({:.1}%)  effort a/b={:.4} ({:.1}%)  settling {:.2}/{:.2} s  peak |u| {:.3e}/{:.3e}",
            c.work_ratio,
            c.work_reduction,
            c.effort_ratio,
            c.effort_reduction,
            c.a.settling_time,
            c.b.settling_time,
            c.a.peak_u,
            c.b.peak_u
        );
    }
    let med = |f: fn(&Comparison) -> f64| median(&results.iter().map(|(_, c)| f(c)).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    println!(
        "median energy reduction over {} seeds: {:.1}% (work), {:.1}% (effort)",
        results.len(),
        med(|c| c.work_reduction),
        med(|c| c.effort_reduction)
    );
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use swarmctl_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::InvalidConfig(_)) | Some(E::Parse { .. }) => "invalid_config",
        Some(E::IncompatibleTrace(_)) => "incompatible_trace",
        Some(E::Io(_)) => "io",
        Some(_) => "runtime",
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "error",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            scenario,
            controller,
            seeds,
            noise,
            dt,
            duration,
            out,
            plot,
        } => run(
            &scenario,
            Overrides {
                controller,
                seeds,
                noise,
                dt,
                duration,
                out_dir: out,
                plot: plot.then_some(true),
            },
        ),
        Command::Verify {
            subsystem,
            samples,
            seed,
            rank_tol,
            out,
        } => verify_cmd(subsystem, samples, seed, rank_tol, &out),
        Command::Compare { a, b } => compare_cmd(&a, &b).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let msg = serde_json::json!({ "error": error_kind(&e), "message": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
