//! Deterministic SVG line plots from CSV traces. No timestamps, no
//! randomness: the same CSV always yields the same bytes, so plots can be
//! snapshot-tested.

use std::path::Path;

use crate::bytes::write_atomic;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 44.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One named series of (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Parses a CSV with a header row; the first column is x, every remaining
/// column becomes one series. Empty cells are skipped.
pub fn series_from_csv(text: &str) -> Result<Vec<Series>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidSpec("empty CSV".into()))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() < 2 {
        return Err(Error::InvalidSpec("CSV needs an x column and a series".into()));
    }
    let mut series: Vec<Series> = names[1..]
        .iter()
        .map(|n| Series {
            name: n.trim().to_string(),
            points: Vec::new(),
        })
        .collect();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let x: f64 = cells[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad x value '{}'", cells[0])))?;
        for (i, s) in series.iter_mut().enumerate() {
            if let Some(cell) = cells.get(i + 1) {
                let cell = cell.trim();
                if cell.is_empty() {
                    continue;
                }
                let y: f64 = cell
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad value '{cell}'")))?;
                s.points.push((x, y));
            }
        }
    }
    series.retain(|s| !s.points.is_empty());
    Ok(series)
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders series into SVG text with labeled axes, one polyline per series.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptyBatch("render_svg"));
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"18\" font-family=\"monospace\" font-size=\"14\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        b = HEIGHT - MARGIN_B
    ));
    // tick labels at range ends
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        MARGIN_L - 6.0,
        sy(y_min) + 4.0,
        fmt_tick(y_min)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        MARGIN_L - 6.0,
        sy(y_max) + 4.0,
        fmt_tick(y_max)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"middle\">{}</text>\n",
        sx(x_min),
        HEIGHT - MARGIN_B + 18.0,
        fmt_tick(x_min)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"middle\">{}</text>\n",
        sx(x_max),
        HEIGHT - MARGIN_B + 18.0,
        fmt_tick(x_max)
    ));
    // axis labels
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
             points=\"{}\"/>\n",
            points.join(" ")
        ));
        // legend entry
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
             fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN_R - 140.0,
            MARGIN_T + 14.0 * (i + 1) as f64,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders one CSV file to an SVG next to it. Returns false (and writes
/// nothing) when the CSV has no data rows.
pub fn plot_csv_file(csv_path: &Path, svg_path: &Path, title: &str) -> Result<bool> {
    let text = std::fs::read_to_string(csv_path)?;
    let series = match series_from_csv(&text) {
        Ok(s) if !s.is_empty() => s,
        _ => {
            eprintln!(
                "warning: {} has no plottable rows, skipping",
                csv_path.display()
            );
            return Ok(false);
        }
    };
    let x_label = text.lines().next().unwrap_or("x").split(',').next().unwrap_or("x").to_string();
    let svg = render_svg(title, &x_label, "value", &series)?;
    write_atomic(svg_path, svg.as_bytes())?;
    Ok(true)
}

/// Extracts the polyline y-coordinates of the first series of an SVG, in
/// drawing order. Test hook for monotonicity checks.
pub fn first_polyline_ys(svg: &str) -> Vec<f64> {
    let Some(start) = svg.find("points=\"") else {
        return Vec::new();
    };
    let rest = &svg[start + 8..];
    let Some(end) = rest.find('"') else {
        return Vec::new();
    };
    rest[..end]
        .split(' ')
        .filter_map(|p| p.split(',').nth(1))
        .filter_map(|y| y.parse().ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_csv_yields_identical_svg_bytes() {
        let csv = "step,loss\n0,1.0\n1,0.5\n2,0.25\n";
        let s1 = render_svg("t", "step", "loss", &series_from_csv(csv).unwrap()).unwrap();
        let s2 = render_svg("t", "step", "loss", &series_from_csv(csv).unwrap()).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn monotone_decreasing_loss_draws_monotone_polyline() {
        // SVG y grows downward, so falling losses mean rising y coordinates
        let csv = "step,loss\n0,8.0\n1,4.0\n2,2.0\n3,1.0\n";
        let svg = render_svg("t", "step", "loss", &series_from_csv(csv).unwrap()).unwrap();
        let ys = first_polyline_ys(&svg);
        assert_eq!(ys.len(), 4);
        assert!(ys.windows(2).all(|w| w[1] >= w[0]), "ys not monotone: {ys:?}");
    }

    #[test]
    fn zero_row_csv_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("empty.csv");
        std::fs::write(&csv_path, "step,loss\n").unwrap();
        let svg_path = dir.path().join("empty.svg");
        let drawn = plot_csv_file(&csv_path, &svg_path, "t").unwrap();
        assert!(!drawn);
        assert!(!svg_path.exists());
    }

    #[test]
    fn empty_cells_skip_points_but_keep_series() {
        let csv = "step,a,b\n0,1.0,\n1,0.5,2.0\n";
        let series = series_from_csv(csv).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].points.len(), 2);
        assert_eq!(series[1].points.len(), 1);
    }
}
