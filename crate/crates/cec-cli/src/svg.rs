//! Minimal deterministic SVG line charts rendered straight from trace CSV
//! bytes: same input bytes, same output bytes, no timestamps or randomness.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: &[&str] = &["#1b6ca8", "#d1495b", "#3a7d44", "#8e5ba6", "#c98a2b", "#4a4e69"];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

/// Renders a line chart from a trace CSV. The first column is the x axis;
/// every other column whose values all parse as finite numbers becomes one
/// polyline. Pure function of the input bytes.
pub fn emit_svg(csv_bytes: &[u8]) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new().from_reader(csv_bytes);
    let header = reader.headers().context("reading CSV header")?.clone();
    if header.len() < 2 {
        bail!("need at least two columns to plot, got {}", header.len());
    }
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.context("reading CSV row")?;
        if record.len() != header.len() {
            bail!("row has {} fields, header has {}", record.len(), header.len());
        }
        for (i, field) in record.iter().enumerate() {
            let v = field.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            columns[i].push(v);
        }
    }
    let rows = columns[0].len();
    if rows == 0 {
        bail!("CSV has no data rows");
    }
    let xs: Vec<f64> = match columns[0].iter().copied().collect::<Option<Vec<f64>>>() {
        Some(xs) => xs,
        None => bail!("x column `{}` contains non-numeric values", &header[0]),
    };

    let mut series = Vec::new();
    for (i, col) in columns.iter().enumerate().skip(1) {
        if let Some(ys) = col.iter().copied().collect::<Option<Vec<f64>>>() {
            series.push(Series {
                name: header[i].to_string(),
                points: xs.iter().copied().zip(ys).collect(),
            });
        }
    }
    if series.is_empty() {
        bail!("no fully numeric series to plot");
    }
    Ok(render(&header[0], &series))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        // Degenerate span: widen so the scale map stays finite.
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

fn render(x_label: &str, series: &[Series]) -> String {
    let (x_lo, x_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.2}\" y1=\"{MARGIN_TOP:.2}\" x2=\"{x0:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>"
    );
    // Axis labels from the column headers.
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let y_label =
        series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ");
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&y_label)
    );
    // Tick labels at the extremes.
    let _ = writeln!(
        out,
        "<text x=\"{x0:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        y0 + 16.0,
        tick(x_lo)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        WIDTH - MARGIN_RIGHT,
        y0 + 16.0,
        tick(x_hi)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{y0:.2}\" text-anchor=\"end\">{}</text>",
        x0 - 6.0,
        tick(y_lo)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
        x0 - 6.0,
        MARGIN_TOP + 8.0,
        tick(y_hi)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() == 1 {
            // A single sample has no line; draw a marker instead.
            let (x, y) = s.points[0];
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>",
                sx(x),
                sy(y)
            );
        } else {
            let mut d = String::new();
            for (j, &(x, y)) in s.points.iter().enumerate() {
                if j > 0 {
                    d.push(' ');
                }
                let _ = write!(d, "{:.2},{:.2}", sx(x), sy(y));
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
            );
        }
        // Legend entry.
        let ly = MARGIN_TOP + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            WIDTH - MARGIN_RIGHT - 130.0,
            ly - 4.0,
            WIDTH - MARGIN_RIGHT - 110.0,
            ly - 4.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>",
            WIDTH - MARGIN_RIGHT - 104.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_numeric_series_yield_two_polylines() {
        let csv = b"iter,D,residual\n0,5.0,1.0\n1,4.0,0.5\n2,3.5,0.2\n";
        let svg = emit_svg(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">iter</text>"));
        assert!(svg.contains("D, residual"));
    }

    #[test]
    fn single_row_draws_markers_not_lines() {
        let csv = b"iter,D\n0,5.0\n";
        let svg = emit_svg(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn non_numeric_columns_are_skipped() {
        let csv = b"iter,algo,U\n0,omad,1.0\n1,omad,2.0\n";
        let svg = emit_svg(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains(">algo<"));
    }

    #[test]
    fn byte_identical_input_byte_identical_output() {
        let csv = b"t,a,b\n0,1.25,2.5\n1,1.5,2.25\n2,2.0,2.0\n";
        assert_eq!(emit_svg(csv).unwrap(), emit_svg(csv).unwrap());
    }

    #[test]
    fn malformed_input_is_an_error() {
        assert!(emit_svg(b"only_one_column\n1\n2\n").is_err());
        assert!(emit_svg(b"x,y\n").is_err());
        assert!(emit_svg(b"x,y\na,b\n").is_err());
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let csv = b"iter,D\n0,5.0\n1,5.0\n2,5.0\n";
        let svg = emit_svg(csv).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }
}
