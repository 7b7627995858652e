//! Static PNG plots via the bitmap backend. Text rendering needs a font file;
//! when none of the known system fonts load, charts are still emitted with
//! axes and data but without captions or tick labels.

use plotters::prelude::*;
use std::path::Path;
use std::sync::OnceLock;

const FONT_CANDIDATES: &[&str] = &[
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/truetype/liberation/LiberationSans-Regular.ttf",
];

static FONT_OK: OnceLock<bool> = OnceLock::new();

fn font_available() -> bool {
    *FONT_OK.get_or_init(|| {
        for path in FONT_CANDIDATES {
            if let Ok(bytes) = std::fs::read(path) {
                let leaked: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font(
                    "sans-serif",
                    plotters::style::FontStyle::Normal,
                    leaked,
                )
                .is_ok()
                {
                    return true;
                }
            }
        }
        false
    })
}

/// A named data series for a line chart.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for (px, py) in points {
        if px.is_finite() {
            x.0 = x.0.min(px);
            x.1 = x.1.max(px);
        }
        if py.is_finite() {
            y.0 = y.0.min(py);
            y.1 = y.1.max(py);
        }
    }
    let pad = |(lo, hi): (f64, f64)| {
        if lo > hi {
            (0.0, 1.0) // no finite data
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            let m = 0.05 * (hi - lo);
            (lo - m, hi + m)
        }
    };
    (pad(x), pad(y))
}

const PALETTE: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

/// Draws a line chart of one or more series.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<(), String> {
    let with_text = font_available();
    let root = BitMapBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let ((x0, x1), (y0, y1)) = bounds(series.iter().flat_map(|s| s.points.iter().copied()));

    let mut builder = ChartBuilder::on(&root);
    builder
        .margin(20)
        .x_label_area_size(50)
        .y_label_area_size(70);
    if with_text {
        builder.caption(title, ("sans-serif", 24));
    }
    let mut chart = builder
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| e.to_string())?;

    let mut mesh = chart.configure_mesh();
    if with_text {
        mesh.x_desc(x_label).y_desc(y_label);
    } else {
        mesh.disable_x_axis().disable_y_axis();
    }
    mesh.draw().map_err(|e| e.to_string())?;

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let drawn = chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| e.to_string())?;
        if with_text {
            drawn
                .label(s.label.clone())
                .legend(move |(x, y)| {
                    PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
                });
        }
    }
    if with_text && series.len() > 1 {
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.85))
            .draw()
            .map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}

/// Draws a two-class scatter chart (accepted vs rejected points).
pub fn scatter_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    accepted: &[(f64, f64)],
    rejected: &[(f64, f64)],
) -> Result<(), String> {
    let with_text = font_available();
    let root = BitMapBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let ((x0, x1), (y0, y1)) =
        bounds(accepted.iter().chain(rejected.iter()).copied());

    let mut builder = ChartBuilder::on(&root);
    builder
        .margin(20)
        .x_label_area_size(50)
        .y_label_area_size(70);
    if with_text {
        builder.caption(title, ("sans-serif", 24));
    }
    let mut chart = builder
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| e.to_string())?;

    let mut mesh = chart.configure_mesh();
    if with_text {
        mesh.x_desc(x_label).y_desc(y_label);
    } else {
        mesh.disable_x_axis().disable_y_axis();
    }
    mesh.draw().map_err(|e| e.to_string())?;

    let acc_color = PALETTE[0];
    let rej_color = PALETTE[1];
    let drawn = chart
        .draw_series(
            accepted
                .iter()
                .map(|p| Circle::new(*p, 2, acc_color.filled())),
        )
        .map_err(|e| e.to_string())?;
    if with_text {
        drawn.label("accepted").legend(move |(x, y)| {
            Circle::new((x + 9, y), 3, acc_color.filled())
        });
    }
    let drawn = chart
        .draw_series(
            rejected
                .iter()
                .map(|p| Circle::new(*p, 2, rej_color.filled())),
        )
        .map_err(|e| e.to_string())?;
    if with_text {
        drawn.label("rejected").legend(move |(x, y)| {
            Circle::new((x + 9, y), 3, rej_color.filled())
        });
    }
    if with_text {
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.85))
            .draw()
            .map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}
