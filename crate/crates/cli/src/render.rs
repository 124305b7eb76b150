use std::path::Path;

use anyhow::{anyhow, Result};
use image::{Rgb, RgbImage};
use plotters::prelude::*;
use tfr_core::Grid;

/// Anchor colours of a perceptually ordered dark-blue → yellow ramp.
const RAMP: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

pub fn colour(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for k in 0..3 {
        let a = RAMP[i][k] as f64;
        let b = RAMP[i + 1][k] as f64;
        out[k] = (a + (b - a) * f).round() as u8;
    }
    out
}

/// Write `grid` as a PNG with row 0 at the bottom. Values are mapped
/// linearly from [lo, hi]; each node becomes a `scale`×`scale` block.
pub fn heatmap_png(grid: &Grid, lo: f64, hi: f64, scale: u32, path: &Path) -> Result<()> {
    let n = grid.n() as u32;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(n * scale, n * scale);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let col = (x / scale) as usize;
        let row = (n - 1 - y / scale) as usize;
        *px = Rgb(colour((grid.get(row, col) - lo) / span));
    }
    img.save(path).map_err(|e| anyhow!("writing {}: {e}", path.display()))
}

/// Temperature along part of the bottom edge for several fields.
pub fn profile_svg(path: &Path, title: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> Result<()> {
    lines_svg(path, title, ("x (m)", "T (K)"), xs, series)
}

/// One line per named series over a shared x axis.
pub fn lines_svg(
    path: &Path,
    title: &str,
    (x_desc, y_desc): (&str, &str),
    xs: &[f64],
    series: &[(String, Vec<f64>)],
) -> Result<()> {
    if xs.len() < 2 {
        return Err(anyhow!("plotting {}: need at least two x values", path.display()));
    }
    let err = |e: &dyn std::fmt::Display| anyhow!("plotting {}: {e}", path.display());
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let all = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (mut y0, mut y1) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = ((y1 - y0) * 0.05).max(0.05);
    y0 -= pad;
    y1 += pad;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| err(&e))?;
    for (i, (name, ys)) in series.iter().enumerate() {
        let style = Palette99::pick(i).stroke_width(2);
        chart
            .draw_series(LineSeries::new(xs.iter().copied().zip(ys.iter().copied()), style))
            .map_err(|e| err(&e))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], Palette99::pick(i).stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

/// Grouped bars: one group per metric, one bar per report.
pub fn bars_svg(path: &Path, metrics: &[&str], reports: &[(String, Vec<f64>)]) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| anyhow!("plotting {}: {e}", path.display());
    let root = SVGBackend::new(path, (760, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let top = reports
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.1;
    let k = reports.len().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("aggregate errors (K)", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..metrics.len() as f64, 0.0..top)
        .map_err(|e| err(&e))?;
    let labels: Vec<String> = metrics.iter().map(|s| s.to_string()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(metrics.len() * 2 + 1)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - i as f64 - 0.5).abs() < 0.26 && i < labels.len() {
                labels[i].clone()
            } else {
                String::new()
            }
        })
        .draw()
        .map_err(|e| err(&e))?;
    for (r, (name, values)) in reports.iter().enumerate() {
        let colour = Palette99::pick(r);
        let width = 0.8 / k;
        chart
            .draw_series(values.iter().enumerate().map(|(m, &v)| {
                let left = m as f64 + 0.1 + r as f64 * width;
                Rectangle::new([(left, 0.0), (left + width, v)], colour.filled())
            }))
            .map_err(|e| err(&e))?
            .label(name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], Palette99::pick(r).filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
