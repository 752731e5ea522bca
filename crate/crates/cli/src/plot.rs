//! Minimal SVG polyline plots.

use std::fmt::Write;

use swarmctl_core::sim::SimTrace;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite()) {
        b = (b.0.min(*x), b.1.max(*x), b.2.min(*y), b.3.max(*y));
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let widen = |lo: f64, hi: f64| if hi - lo > 0.0 { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let (x0, x1) = widen(b.0, b.1);
    let (y0, y1) = widen(b.2, b.3);
    (x0, x1, y0, y1)
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (v, anchor, x, y) in [
        (x0, "start", PAD, H - PAD + 16.0),
        (x1, "end", W - PAD, H - PAD + 16.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD + 10.0)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{v:.3e}</text>"#, PAD - 4.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 90.0,
            PAD + 16.0 * (i as f64 + 1.0),
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Mean trajectory, variances and inputs of one run.
pub fn trace_plots(trace: &SimTrace) -> Vec<(&'static str, String)> {
    let s = &trace.samples;
    let series = |name: &str, f: &dyn Fn(&swarmctl_core::sim::Sample) -> (f64, f64)| Series {
        name: name.into(),
        points: s.iter().map(f).collect(),
    };
    let target = trace.config.target;
    vec![
        (
            "mean",
            line_plot(
                "mean position",
                "x (m)",
                "y (m)",
                &[
                    series("mean", &|p| (p.stats.mean[0], p.stats.mean[2])),
                    Series {
                        name: "target".into(),
                        points: vec![(target[0], target[1]), (target[0], target[1] + 1e-3)],
                    },
                ],
            ),
        ),
        (
            "variance",
            line_plot(
                "position variance",
                "t (s)",
                "m^2",
                &[series("var_x", &|p| (p.t, p.stats.var_x)), series("var_y", &|p| (p.t, p.stats.var_y))],
            ),
        ),
        (
            "inputs",
            line_plot(
                "broadcast input",
                "t (s)",
                "u",
                &[series("u1", &|p| (p.t, p.u[0])), series("u2", &|p| (p.t, p.u[1]))],
            ),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_count_and_scaling() {
        let svg = line_plot(
            "t",
            "x",
            "y",
            &[
                Series {
                    name: "a".into(),
                    points: vec![(0.0, 0.0), (1.0, 1.0)],
                },
                Series {
                    name: "b".into(),
                    points: vec![(0.5, f64::NAN)],
                },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(&format!("{:.2},{:.2}", PAD, H - PAD)));
        assert!(svg.contains(&format!("{:.2},{:.2}", W - PAD, PAD)));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn flat_series_do_not_divide_by_zero() {
        let svg = line_plot(
            "t",
            "x",
            "y",
            &[Series {
                name: "c".into(),
                points: vec![(1.0, 2.0), (1.0, 2.0)],
            }],
        );
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
