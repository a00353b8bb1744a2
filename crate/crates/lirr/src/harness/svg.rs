//! Standalone SVG line charts for sweep curves: one polyline per method,
//! labeled axes, and a legend.

use std::fmt::Write as _;
use std::path::Path;

use crate::harness::HarnessError;

#[derive(Clone, Debug)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Renders the chart. Series with at least two points become polylines;
/// single-point series degrade to scatter markers (with a warning on
/// stderr from `emit_curve_svg`).
pub fn render_curve_svg(series: &[CurveSeries], x_label: &str, y_label: &str) -> String {
    let all_points: Vec<(f64, f64)> =
        series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_lo, x_hi) = padded_range(all_points.iter().map(|p| p.0));
    let (y_lo, y_hi) = padded_range(all_points.iter().map(|p| p.1));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    write!(
        svg,
        r#"<svg version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" xmlns="http://www.w3.org/2000/svg">"#
    )
    .unwrap();
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);

    // axes
    write!(
        svg,
        r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#,
        x0 = MARGIN_LEFT,
        x1 = MARGIN_LEFT + plot_w,
        y0 = MARGIN_TOP,
        y1 = MARGIN_TOP + plot_h
    )
    .unwrap();

    // ticks and grid labels
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let px = sx(fx);
        write!(
            svg,
            r#"<line x1="{px}" y1="{yb}" x2="{px}" y2="{yb2}" stroke="black"/><text x="{px}" y="{ty}" font-size="11" text-anchor="middle">{label}</text>"#,
            yb = MARGIN_TOP + plot_h,
            yb2 = MARGIN_TOP + plot_h + 6.0,
            ty = MARGIN_TOP + plot_h + 20.0,
            label = format_tick(fx)
        )
        .unwrap();
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let py = sy(fy);
        write!(
            svg,
            r#"<line x1="{xa}" y1="{py}" x2="{xb}" y2="{py}" stroke="black"/><text x="{tx}" y="{typ}" font-size="11" text-anchor="end">{label}</text>"#,
            xa = MARGIN_LEFT - 6.0,
            xb = MARGIN_LEFT,
            tx = MARGIN_LEFT - 9.0,
            typ = py + 4.0,
            label = format_tick(fy)
        )
        .unwrap();
    }

    // axis labels
    write!(
        svg,
        r#"<text x="{x}" y="{y}" font-size="13" text-anchor="middle">{x_label}</text>"#,
        x = MARGIN_LEFT + plot_w / 2.0,
        y = HEIGHT - 15.0
    )
    .unwrap();
    write!(
        svg,
        r#"<text x="18" y="{y}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {y})">{y_label}</text>"#,
        y = MARGIN_TOP + plot_h / 2.0
    )
    .unwrap();

    // series
    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        if s.points.len() >= 2 {
            let mut pts = String::new();
            for (x, y) in &s.points {
                write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y)).unwrap();
            }
            write!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.trim_end()
            )
            .unwrap();
        }
        for (x, y) in &s.points {
            write!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(*x),
                sy(*y)
            )
            .unwrap();
        }
        // legend entry
        let ly = MARGIN_TOP + 14.0 + 18.0 * si as f64;
        write!(
            svg,
            r#"<rect x="{lx}" y="{ry}" width="12" height="12" fill="{color}"/><text x="{tx}" y="{ty}" font-size="12">{label}</text>"#,
            lx = WIDTH - MARGIN_RIGHT + 16.0,
            ry = ly - 10.0,
            tx = WIDTH - MARGIN_RIGHT + 33.0,
            ty = ly,
            label = s.label
        )
        .unwrap();
    }

    svg.push_str("</svg>");
    svg
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.06;
    (lo - pad, hi + pad)
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders and writes the chart; warns when a series cannot form a polyline.
pub fn emit_curve_svg(
    series: &[CurveSeries],
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<(), HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Config("no series to plot".into()));
    }
    for s in series {
        if s.points.len() < 2 {
            eprintln!(
                "warning: series {:?} has {} point(s); drawing markers only",
                s.label,
                s.points.len()
            );
        }
    }
    let svg = render_curve_svg(series, x_label, y_label);
    std::fs::write(path, svg)
        .map_err(|e| HarnessError::Runtime(format!("write {}: {e}", path.display())))
}
