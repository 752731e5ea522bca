//! Trace CSV export, run summaries, and SDRE-vs-baseline comparison.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{RunStatus, SimConfig, SimTrace};

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 22] = [
    "t",
    "robot_id",
    "x1",
    "dx1",
    "y1",
    "dy1",
    "theta",
    "dtheta",
    "u1",
    "u2",
    "mean_x",
    "mean_y",
    "mean_theta",
    "var_x",
    "var_y",
    "mode_x",
    "mode_y",
    "L",
    "dL",
    "care_residual",
    "e_work",
    "e_effort",
];

/// One CSV row: a robot at one sample, with the swarm-level columns repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub robot_id: usize,
    pub x1: f64,
    pub dx1: f64,
    pub y1: f64,
    pub dy1: f64,
    pub theta: f64,
    pub dtheta: f64,
    pub u1: f64,
    pub u2: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_theta: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub mode_x: String,
    pub mode_y: String,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "dL")]
    pub dl: f64,
    pub care_residual: f64,
    pub e_work: f64,
    pub e_effort: f64,
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

pub fn trace_rows(trace: &SimTrace) -> Vec<TraceRow> {
    let mut rows = Vec::with_capacity(trace.samples.len() * trace.config.n_robots);
    for (k, s) in trace.samples.iter().enumerate() {
        let m = &s.stats.mean;
        let dl = trace.lyapunov_rate(k);
        for (id, x) in s.robots.iter().enumerate() {
            rows.push(TraceRow {
                t: s.t,
                robot_id: id,
                x1: x[0],
                dx1: x[1],
                y1: x[2],
                dy1: x[3],
                theta: x[4],
                dtheta: x[5],
                u1: s.u[0],
                u2: s.u[1],
                mean_x: m[0],
                mean_y: m[2],
                mean_theta: m[4],
                var_x: s.stats.var_x,
                var_y: s.stats.var_y,
                mode_x: s.supervisor.mode_x.as_str().into(),
                mode_y: s.supervisor.mode_y.as_str().into(),
                l: s.lyapunov,
                dl,
                care_residual: s.care_residual,
                e_work: s.energy_work,
                e_effort: s.energy_effort,
            });
        }
    }
    rows
}

pub fn write_trace<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace_rows(trace) {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a trace CSV; every column of [`TRACE_COLUMNS`] must be present.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::IncompatibleTrace(e.to_string()))?.clone();
    let missing: Vec<&str> = TRACE_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompatibleTrace(format!("missing columns: {}", missing.join(", "))));
    }
    let rows: std::result::Result<Vec<TraceRow>, _> = r.deserialize().collect();
    let rows = rows.map_err(|e| Error::IncompatibleTrace(e.to_string()))?;
    if rows.is_empty() {
        return Err(Error::IncompatibleTrace("trace has no rows".into()));
    }
    Ok(rows)
}

/// Headline numbers of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub duration: f64,
    pub n_robots: usize,
    pub energy_work: f64,
    pub energy_effort: f64,
    pub peak_u: f64,
    /// First time after which the mean stays within the settling band of its
    /// final position.
    pub settling_time: f64,
    pub final_mean: [f64; 2],
}

/// Default settling band (m).
pub const SETTLING_BAND: f64 = 0.06;

pub fn trace_metrics(rows: &[TraceRow], band: f64) -> Result<TraceMetrics> {
    let first = rows.first().ok_or_else(|| Error::IncompatibleTrace("trace has no rows".into()))?;
    let swarm: Vec<&TraceRow> = rows.iter().filter(|r| r.robot_id == first.robot_id).collect();
    let last = swarm[swarm.len() - 1];
    let n_robots = rows.iter().map(|r| r.robot_id).max().unwrap_or(0) + 1;
    let peak_u = swarm.iter().map(|r| r.u1.abs().max(r.u2.abs())).fold(0.0, f64::max);
    let outside = swarm
        .iter()
        .rposition(|r| (r.mean_x - last.mean_x).hypot(r.mean_y - last.mean_y) > band);
    let settling_time = match outside {
        Some(k) if k + 1 < swarm.len() => swarm[k + 1].t,
        Some(_) => last.t,
        None => swarm[0].t,
    };
    Ok(TraceMetrics {
        duration: last.t - swarm[0].t,
        n_robots,
        energy_work: last.e_work,
        energy_effort: last.e_effort,
        peak_u,
        settling_time,
        final_mean: [last.mean_x, last.mean_y],
    })
}

/// `100 (1 − a/b)`; zero when both are zero.
pub fn reduction_percent(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if b == 0.0 {
        f64::NEG_INFINITY
    } else {
        100.0 * (1.0 - a / b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: TraceMetrics,
    pub b: TraceMetrics,
    pub work_ratio: f64,
    pub effort_ratio: f64,
    pub work_reduction: f64,
    pub effort_reduction: f64,
}

/// Compares trace `a` against reference `b`. The traces must cover the same
/// swarm size and time span.
pub fn compare(a: &[TraceRow], b: &[TraceRow]) -> Result<Comparison> {
    compare_metrics(trace_metrics(a, SETTLING_BAND)?, trace_metrics(b, SETTLING_BAND)?)
}

/// [`compare`] on precomputed metrics, e.g. from two run summaries.
pub fn compare_metrics(ma: TraceMetrics, mb: TraceMetrics) -> Result<Comparison> {
    if ma.n_robots != mb.n_robots {
        return Err(Error::IncompatibleTrace(format!(
            "swarm sizes differ ({} vs {})",
            ma.n_robots, mb.n_robots
        )));
    }
    if (ma.duration - mb.duration).abs() > 1e-9 * ma.duration.abs().max(1.0) {
        return Err(Error::IncompatibleTrace(format!(
            "durations differ ({} s vs {} s)",
            ma.duration, mb.duration
        )));
    }
    let ratio = |x: f64, y: f64| if x == y { 1.0 } else { x / y };
    Ok(Comparison {
        a: ma,
        b: mb,
        work_ratio: ratio(ma.energy_work, mb.energy_work),
        effort_ratio: ratio(ma.energy_effort, mb.energy_effort),
        work_reduction: reduction_percent(ma.energy_work, mb.energy_work),
        effort_reduction: reduction_percent(ma.energy_effort, mb.energy_effort),
    })
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<16}{:>14}{:>14}", "", "a", "b")?;
        writeln!(f, "{:<16}{:>14.6e}{:>14.6e}", "energy_work", self.a.energy_work, self.b.energy_work)?;
        writeln!(f, "{:<16}{:>14.6e}{:>14.6e}", "energy_effort", self.a.energy_effort, self.b.energy_effort)?;
        writeln!(f, "{:<16}{:>14.2}{:>14.2}", "settling_s", self.a.settling_time, self.b.settling_time)?;
        writeln!(f, "{:<16}{:>14.6e}{:>14.6e}", "peak_u", self.a.peak_u, self.b.peak_u)?;
        writeln!(f, "energy ratio a/b: work {:.4}, effort {:.4}", self.work_ratio, self.effort_ratio)?;
        write!(
            f,
            "energy reduction: {:.1}% (work), {:.1}% (effort)",
            self.work_reduction, self.effort_reduction
        )
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Per-run summary written next to the trace. Values come first so the
/// TOML form keeps scalar keys ahead of the nested tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub controller: String,
    pub seed: u64,
    pub exit: String,
    pub abort_reason: Option<String>,
    pub final_time: f64,
    pub final_mean: [f64; 3],
    pub final_var: [f64; 2],
    pub final_distance: f64,
    pub energy_work: f64,
    pub energy_effort: f64,
    pub mode_switches: usize,
    pub lyapunov_flags: usize,
    /// Flags in the final quarter of the run.
    pub late_lyapunov_flags: usize,
    pub max_care_residual: f64,
    pub sigma_enter: f64,
    pub sigma_exit: f64,
    pub threshold_rule: String,
    pub metrics: TraceMetrics,
    pub config: SimConfig,
}

/// Fraction of the run counted as post-transient for the Lyapunov flags.
pub const LATE_FRACTION: f64 = 0.25;

impl RunSummary {
    pub fn from_trace(trace: &SimTrace) -> Self {
        let last = trace.last();
        let m = &last.stats.mean;
        let hyst = trace.config.hysteresis_config();
        let (exit, abort_reason) = match &trace.status {
            RunStatus::Completed => ("completed".to_string(), None),
            RunStatus::Aborted { reason } => ("aborted".to_string(), Some(reason.clone())),
        };
        let max_care_residual = trace
            .samples
            .iter()
            .map(|s| s.care_residual)
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max);
        Self {
            controller: trace.config.controller.to_string(),
            seed: trace.config.seed,
            exit,
            abort_reason,
            final_time: last.t,
            final_mean: [m[0], m[2], m[4]],
            final_var: [last.stats.var_x, last.stats.var_y],
            final_distance: trace.final_distance(),
            energy_work: trace.energy_work(),
            energy_effort: trace.energy_effort(),
            mode_switches: trace.mode_switches(),
            lyapunov_flags: trace.lyapunov_flags(),
            late_lyapunov_flags: trace.late_lyapunov_flags(LATE_FRACTION),
            max_care_residual,
            sigma_enter: hyst.sigma_enter,
            sigma_exit: hyst.sigma_exit,
            threshold_rule: "sigma_enter = 0.55 N r^2 + 15 r^2, sigma_exit = 0.55 N r^2 + 2.5 r^2 unless overridden"
                .into(),
            metrics: trace_metrics(&trace_rows(trace), SETTLING_BAND).expect("a trace has at least one sample"),
            config: trace.config.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "summary".into(),
            message: e.to_string(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "summary".into(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_scenario, ControllerKind};

    fn short(controller: ControllerKind) -> SimTrace {
        run_scenario(&SimConfig {
            duration: 0.3,
            controller,
            ..SimConfig::default()
        })
        .unwrap()
    }

    fn csv_of(trace: &SimTrace) -> Vec<u8> {
        let mut buf = Vec::new();
        write_trace(trace, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_order() {
        let buf = csv_of(&short(ControllerKind::Sdre));
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, TRACE_COLUMNS.join(","));
    }

    #[test]
    fn round_trip_rows() {
        let tr = short(ControllerKind::Pd);
        let rows = read_trace(csv_of(&tr).as_slice()).unwrap();
        assert_eq!(rows.len(), tr.samples.len() * 4);
        assert_eq!(rows[5].robot_id, 1);
        assert!(rows[0].l.is_nan());
        assert_eq!(rows.last().unwrap().e_work, tr.energy_work());
    }

    #[test]
    fn identical_traces_give_zero_reduction() {
        let rows = read_trace(csv_of(&short(ControllerKind::Sdre)).as_slice()).unwrap();
        let c = compare(&rows, &rows).unwrap();
        assert_eq!((c.work_reduction, c.effort_reduction), (0.0, 0.0));
        assert!(c.to_string().contains("energy reduction: 0.0% (work), 0.0% (effort)"));
    }

    #[test]
    fn missing_columns() {
        let text = "t,robot_id,x1\n0,0,0.5\n";
        match read_trace(text.as_bytes()) {
            Err(Error::IncompatibleTrace(msg)) => assert!(msg.contains("e_effort")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_swarms() {
        let a = read_trace(csv_of(&short(ControllerKind::Pd)).as_slice()).unwrap();
        let b: Vec<TraceRow> = a.iter().filter(|r| r.robot_id < 2).cloned().collect();
        assert!(matches!(compare(&a, &b), Err(Error::IncompatibleTrace(_))));
    }

    #[test]
    fn reductions_and_median() {
        assert_eq!(reduction_percent(0.4639, 0.4639), 0.0);
        assert!((reduction_percent(0.4639, 1.0347) - 55.165).abs() < 1e-3);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn settling_time() {
        let mk = |t: f64, x: f64| TraceRow {
            t,
            robot_id: 0,
            x1: x,
            dx1: 0.0,
            y1: 0.0,
            dy1: 0.0,
            theta: 0.0,
            dtheta: 0.0,
            u1: 0.0,
            u2: 0.0,
            mean_x: x,
            mean_y: 0.0,
            mean_theta: 0.0,
            var_x: 0.0,
            var_y: 0.0,
            mode_x: "TRACK".into(),
            mode_y: "TRACK".into(),
            l: f64::NAN,
            dl: f64::NAN,
            care_residual: f64::NAN,
            e_work: 0.0,
            e_effort: 0.0,
        };
        let rows = vec![mk(0.0, 1.0), mk(1.0, 0.5), mk(2.0, 0.05), mk(3.0, 0.0)];
        assert_eq!(trace_metrics(&rows, 0.06).unwrap().settling_time, 2.0);
    }

    #[test]
    fn summary_round_trip() {
        let s = RunSummary::from_trace(&short(ControllerKind::Sdre));
        let text = s.to_toml().unwrap();
        assert_eq!(RunSummary::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn summaries_compare_like_traces() {
        let (a, b) = (short(ControllerKind::Sdre), short(ControllerKind::Pd));
        let from_rows = compare(&read_trace(&csv_of(&a)[..]).unwrap(), &read_trace(&csv_of(&b)[..]).unwrap()).unwrap();
        let sa = RunSummary::from_toml(&RunSummary::from_trace(&a).to_toml().unwrap()).unwrap();
        let sb = RunSummary::from_toml(&RunSummary::from_trace(&b).to_toml().unwrap()).unwrap();
        let from_summaries = compare_metrics(sa.metrics, sb.metrics).unwrap();
        assert_eq!(from_summaries, from_rows);
    }
}
