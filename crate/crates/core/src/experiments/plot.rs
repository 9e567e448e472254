//! SVG figures for the study reports.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};

use super::bias::BiasReport;
use super::correlation::{CorrelationReport, ScatterRow};
use super::sublist::SublistReport;

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Config(format!("{}: plotting failed: {e}", path.display()))
}

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

/// Mean validation |corr| per inner component, one bar group per alpha.
pub fn correlation_bars(path: &Path, report: &CorrelationReport) -> Result<()> {
    let err = plot_err(path);
    let r = report
        .summary
        .first()
        .map_or(0, |s| s.mean_abs_val_corr_by_component.len());
    let groups = report.summary.len().max(1);
    let root = SVGBackend::new(path, (900, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("|corr(z, {})| on validation", report.property),
            ("sans-serif", 18),
        )
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0f64..r as f64, 0f64..1f64)
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("component")
        .y_desc("mean |corr|")
        .disable_x_mesh()
        .draw()
        .map_err(&err)?;
    let w = 0.8 / groups as f64;
    for (g, s) in report.summary.iter().enumerate() {
        let color = COLORS[g % COLORS.len()];
        chart
            .draw_series(s.mean_abs_val_corr_by_component.iter().enumerate().map(|(c, &v)| {
                let x0 = c as f64 + 0.1 + g as f64 * w;
                Rectangle::new([(x0, 0.0), (x0 + w, v)], color.filled())
            }))
            .map_err(&err)?
            .label(format!("alpha {}", s.alpha))
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)
}

/// Bound component against the property for one (alpha, seed) run.
pub fn correlation_scatter(path: &Path, rows: &[ScatterRow], alpha: f64, seed: u64) -> Result<()> {
    let err = plot_err(path);
    let pts: Vec<(f64, f64, bool)> = rows
        .iter()
        .filter(|r| r.0 == alpha && r.1 == seed)
        .map(|r| (r.4, r.5, r.3 == "val"))
        .collect();
    let (xmin, xmax) = bounds(pts.iter().map(|p| p.0));
    let (ymin, ymax) = bounds(pts.iter().map(|p| p.1));
    let root = SVGBackend::new(path, (520, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("alpha {alpha}, seed {seed}"), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(xmin..xmax, ymin..ymax)
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("z[k]")
        .y_desc("property")
        .draw()
        .map_err(&err)?;
    for (val, color) in [(false, BLUE.mix(0.4)), (true, RED.mix(0.8))] {
        chart
            .draw_series(
                pts.iter()
                    .filter(|p| p.2 == val)
                    .map(|p| Circle::new((p.0, p.1), 2, color.filled())),
            )
            .map_err(&err)?;
    }
    root.present().map_err(&err)
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

/// Success and extrapolation rate against bias, one line pair per report.
pub fn bias_curves(path: &Path, reports: &[(String, BiasReport)]) -> Result<()> {
    let err = plot_err(path);
    let (xmin, xmax) = bounds(reports.iter().flat_map(|(_, r)| r.levels.iter().filter_map(|l| l.bias)));
    let root = SVGBackend::new(path, (720, 440)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("generation vs bias", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(xmin..xmax, 0f64..1f64)
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("bias")
        .y_desc("rate")
        .draw()
        .map_err(&err)?;
    for (i, (name, r)) in reports.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts = |f: fn(&super::bias::BiasLevel) -> f64| -> Vec<(f64, f64)> {
            r.levels.iter().filter_map(|l| l.bias.map(|b| (b, f(l)))).collect()
        };
        chart
            .draw_series(LineSeries::new(pts(|l| l.success_rate), color.stroke_width(2)))
            .map_err(&err)?
            .label(format!("{name} success"))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 15, y)], color.stroke_width(2)));
        chart
            .draw_series(LineSeries::new(pts(|l| l.extrapolation_rate), color.stroke_width(1)))
            .map_err(&err)?
            .label(format!("{name} extrapolation"))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 15, y)], color.stroke_width(1)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)
}

/// First-discovery cycle counts per ranker.
pub fn cycle_histogram(path: &Path, report: &SublistReport) -> Result<()> {
    let err = plot_err(path);
    let cycles = report.spec.sublists();
    let series: Vec<(&str, Vec<usize>)> = vec![
        ("proposed", report.trials.iter().map(|t| t.proposed_cycle).collect()),
        (
            "baseline",
            report.trials.iter().filter_map(|t| t.baseline_cycle).collect(),
        ),
        ("random", report.trials.iter().map(|t| t.random_cycle).collect()),
    ];
    let ymax = report.trials.len().max(1) as f64;
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("first-discovery cycle", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.5f64..cycles as f64 + 0.5, 0f64..ymax)
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("cycle")
        .y_desc("trials")
        .disable_x_mesh()
        .draw()
        .map_err(&err)?;
    let w = 0.8 / series.len() as f64;
    for (g, (name, vals)) in series.iter().enumerate() {
        let color = COLORS[g % COLORS.len()];
        let counts: Vec<usize> = (1..=cycles).map(|c| vals.iter().filter(|&&v| v == c).count()).collect();
        chart
            .draw_series(counts.iter().enumerate().map(|(i, &n)| {
                let x0 = i as f64 + 0.6 + g as f64 * w;
                Rectangle::new([(x0, 0.0), (x0 + w, n as f64)], color.filled())
            }))
            .map_err(&err)?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)
}
