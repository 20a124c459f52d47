use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::aggregate::Summary;
use crate::Error;

pub const CURVES_FILE: &str = "learning_curves.svg";
pub const PSI_FILE: &str = "psi_schedule.svg";

struct Series<'a> {
    label: &'a str,
    values: &'a [f64],
}

fn line_chart(path: &Path, title: &str, y_desc: &str, series: &[Series<'_>]) -> Result<(), Error> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(format!("{}: {e}", path.display()));
    let len = series
        .iter()
        .map(|s| s.values.len())
        .max()
        .unwrap_or(0)
        .max(2);
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if lo > hi {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);

    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(1usize..len, (lo - pad)..(hi + pad))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc(y_desc)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (k, s) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let points = s.values.iter().enumerate().map(|(i, v)| (i + 1, *v));
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(s.label)
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Writes the median learning curves of every method and the ψ schedule of
/// every FPO method into `out_dir`; returns the files written.
pub fn plot(summary: &Summary, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(out_dir.to_path_buf(), e))?;
    let curves: Vec<Series<'_>> = summary
        .methods
        .iter()
        .map(|m| Series {
            label: &m.label,
            values: &m.median_curve,
        })
        .collect();
    let curves_path = out_dir.join(CURVES_FILE);
    line_chart(&curves_path, "Median expected return", "J", &curves)?;
    let mut written = vec![curves_path];

    let psi: Vec<Series<'_>> = summary
        .methods
        .iter()
        .filter(|m| m.method.starts_with("fpo") && !m.psi_mean_curve.is_empty())
        .map(|m| Series {
            label: &m.label,
            values: &m.psi_mean_curve,
        })
        .collect();
    if !psi.is_empty() {
        let psi_path = out_dir.join(PSI_FILE);
        line_chart(
            &psi_path,
            "Mean of the selected sampling distribution",
            "mean θ",
            &psi,
        )?;
        written.push(psi_path);
    }
    Ok(written)
}
