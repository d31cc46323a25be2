//! Privacy/utility curves as SVG.

use std::path::Path;

use plotters::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct TradeOffPoint {
    pub n: usize,
    /// `1 - mean SSIM`.
    pub privacy: Option<f64>,
    /// Matching recall.
    pub utility: Option<f64>,
}

/// Both measures against the keypoint budget on a shared [0, 1] axis.
pub fn trade_off_svg(points: &[TradeOffPoint], path: &Path) -> anyhow::Result<()> {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.n);
    let max_n = pts.iter().map(|p| p.n).max().unwrap_or(1).max(1) as f64;
    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Privacy and utility vs. number of features", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(44)
        .build_cartesian_2d(0.0..max_n * 1.05, 0.0..1.0)?;
    chart.configure_mesh().x_desc("features kept (N)").y_desc("value").draw()?;
    let series = |f: fn(&TradeOffPoint) -> Option<f64>| pts.iter().filter_map(move |p| f(p).map(|v| (p.n as f64, v))).collect::<Vec<_>>();
    chart
        .draw_series(LineSeries::new(series(|p| p.privacy), &RED))?
        .label("privacy (1 - SSIM)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    chart
        .draw_series(LineSeries::new(series(|p| p.utility), &BLUE))?
        .label("utility (matching recall)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw()?;
    root.present()?;
    Ok(())
}
