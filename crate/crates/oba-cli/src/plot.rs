//! Self-contained SVG plots on a fixed 800×500 canvas: label histogram
//! (log counts, 0.5 mm bins), ablation polyline, and grid heatmaps with a
//! shared white-to-blue colormap.

use std::fmt::Write as _;

use oba_core::{ObaError, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 58.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
        WIDTH / 2.0
    );
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, s: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{s}</text>"
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = writeln!(
        out,
        "<path d=\"M {x0:.1} {y1:.1} L {x0:.1} {y0:.1} L {x1:.1} {y0:.1}\" \
         fill=\"none\" stroke=\"black\"/>"
    );
    text(out, (x0 + x1) / 2.0, HEIGHT - 14.0, "middle", x_label);
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">{y_label}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

/// Linear white→blue ramp; t is clamped to [0, 1].
pub fn colormap(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(255.0, 13.0),
        lerp(255.0, 71.0),
        lerp(255.0, 161.0)
    )
}

/// Log-count histogram of labels in 0.5 mm bins.
pub fn histogram_svg(labels: &[f64]) -> Result<String> {
    if labels.is_empty() {
        return Err(ObaError::InvalidArg("histogram of an empty dataset".into()));
    }
    let mut counts: Vec<usize> = Vec::new();
    for &y in labels {
        if !y.is_finite() || y < 0.0 {
            return Err(ObaError::InvalidArg(format!(
                "histogram label must be finite and non-negative, got {y}"
            )));
        }
        let bin = (y / 0.5).floor() as usize;
        if bin >= counts.len() {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    let bars: Vec<f64> = counts.iter().map(|&c| (1.0 + c as f64).ln()).collect();
    let top = bars.iter().cloned().fold(0.0, f64::max).max(1e-9);
    let span_mm = counts.len() as f64 * 0.5;

    let x0 = MARGIN_L;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let plot_h = y0 - MARGIN_T;

    let mut out = String::new();
    svg_open(
        &mut out,
        "precipitation labels, ln(1 + count) per 0.5 mm bin",
    );
    axes(&mut out, "precipitation (mm)", "ln(1 + count)");
    let bin_w = plot_w / counts.len() as f64;
    for (i, &v) in bars.iter().enumerate() {
        if counts[i] == 0 {
            continue;
        }
        let h = plot_h * v / top;
        let _ = writeln!(
            out,
            "<rect class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"#4878b0\" stroke=\"white\"/>",
            x0 + i as f64 * bin_w,
            y0 - h,
            bin_w,
            h
        );
    }
    for frac in [0.0, 0.5, 1.0] {
        text(
            &mut out,
            x0 + plot_w * frac,
            y0 + 18.0,
            "middle",
            &format!("{:.1}", span_mm * frac),
        );
    }
    text(&mut out, x0 - 8.0, y0 + 4.0, "end", "0");
    text(
        &mut out,
        x0 - 8.0,
        MARGIN_T + 4.0,
        "end",
        &format!("{top:.2}"),
    );
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug)]
pub struct AblationSeries {
    pub param: String,
    /// (parameter value, MAE) per ablation row, in file order.
    pub points: Vec<(f64, f64)>,
}

pub fn parse_ablation_csv(csv: &str) -> Result<AblationSeries> {
    let mut lines = csv.lines();
    let header = lines
        .next()
        .ok_or_else(|| ObaError::Format("empty ablation CSV".into()))?;
    if header != "param,value,mae,mpae,ts_0.1,ts_1,ts_10" {
        return Err(ObaError::Format(format!(
            "unexpected ablation CSV header: {header}"
        )));
    }
    let mut param = String::new();
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(ObaError::Format(format!(
                "ablation CSV row {}: expected 7 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        if param.is_empty() {
            param = fields[0].to_string();
        } else if param != fields[0] {
            return Err(ObaError::Format(format!(
                "ablation CSV row {}: mixed params '{param}' and '{}'",
                i + 2,
                fields[0]
            )));
        }
        let value: f64 = fields[1].parse().map_err(|_| {
            ObaError::Format(format!("ablation CSV row {}: bad value field", i + 2))
        })?;
        let mae: f64 = fields[2]
            .parse()
            .map_err(|_| ObaError::Format(format!("ablation CSV row {}: bad mae field", i + 2)))?;
        points.push((value, mae));
    }
    if points.is_empty() {
        return Err(ObaError::Format("ablation CSV has no data rows".into()));
    }
    Ok(AblationSeries { param, points })
}

/// MAE-vs-parameter polyline with one marker per ablation row.
pub fn ablation_svg(series: &AblationSeries) -> Result<String> {
    if series.points.is_empty() {
        return Err(ObaError::InvalidArg("ablation plot needs points".into()));
    }
    let xs: Vec<f64> = series.points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = series.points.iter().map(|p| p.1).collect();
    let (x_lo, x_hi) = padded_range(&xs);
    let (y_lo, y_hi) = padded_range(&ys);

    let x0 = MARGIN_L;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let plot_h = y0 - MARGIN_T;
    let px = |v: f64| x0 + plot_w * (v - x_lo) / (x_hi - x_lo);
    let py = |v: f64| y0 - plot_h * (v - y_lo) / (y_hi - y_lo);

    let mut out = String::new();
    svg_open(&mut out, &format!("MAE vs {}", series.param));
    axes(&mut out, &series.param, "MAE (mm)");
    let pts: Vec<String> = series
        .points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#b03030\" stroke-width=\"2\"/>",
        pts.join(" ")
    );
    for &(x, y) in &series.points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#b03030\"/>",
            px(x),
            py(y)
        );
        text(&mut out, px(x), py(y) - 10.0, "middle", &format!("{y:.3}"));
    }
    for v in [x_lo, x_hi] {
        text(&mut out, px(v), y0 + 18.0, "middle", &format!("{v:.3}"));
    }
    text(&mut out, x0 - 8.0, y0 + 4.0, "end", &format!("{y_lo:.3}"));
    text(
        &mut out,
        x0 - 8.0,
        MARGIN_T + 4.0,
        "end",
        &format!("{y_hi:.3}"),
    );
    out.push_str("</svg>\n");
    Ok(out)
}

fn padded_range(vs: &[f64]) -> (f64, f64) {
    let lo = vs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

pub struct HeatPanel {
    pub title: String,
    pub h: usize,
    pub w: usize,
    pub cells: Vec<f64>,
}

impl HeatPanel {
    pub fn grid(title: &str, h: usize, w: usize, cells: Vec<f64>) -> Self {
        Self {
            title: title.to_string(),
            h,
            w,
            cells,
        }
    }

    /// A panel showing one scalar (prediction or truth) as a uniform grid.
    pub fn uniform(title: &str, h: usize, w: usize, value: f64) -> Self {
        Self::grid(title, h, w, vec![value; h * w])
    }
}

pub struct HeatRow {
    pub label: String,
    pub panels: Vec<HeatPanel>,
}

/// Rows of side-by-side grids under one shared [0, max] white→blue scale,
/// with a legend strip on the right.
pub fn heatmap_svg(rows: &[HeatRow]) -> Result<String> {
    if rows.is_empty() || rows.iter().any(|r| r.panels.is_empty()) {
        return Err(ObaError::InvalidArg(
            "heatmap needs at least one panel".into(),
        ));
    }
    let n_cols = rows[0].panels.len();
    let mut v_max: f64 = 0.0;
    for row in rows {
        if row.panels.len() != n_cols {
            return Err(ObaError::Shape(format!(
                "heatmap rows disagree on panel count: {} vs {n_cols}",
                row.panels.len()
            )));
        }
        for p in &row.panels {
            if p.h == 0 || p.w == 0 || p.cells.len() != p.h * p.w {
                return Err(ObaError::Shape(format!(
                    "panel '{}' claims {}x{} but holds {} cells",
                    p.title,
                    p.h,
                    p.w,
                    p.cells.len()
                )));
            }
            for &v in &p.cells {
                if !v.is_finite() {
                    return Err(ObaError::InvalidArg(format!(
                        "panel '{}' contains a non-finite cell",
                        p.title
                    )));
                }
                v_max = v_max.max(v);
            }
        }
    }

    let legend_w = 70.0;
    let x0 = MARGIN_L;
    let area_w = WIDTH - MARGIN_L - MARGIN_R - legend_w;
    let y0 = MARGIN_T;
    let area_h = HEIGHT - MARGIN_T - MARGIN_B;
    let col_w = area_w / n_cols as f64;
    let row_h = area_h / rows.len() as f64;

    let mut out = String::new();
    svg_open(&mut out, "uncorrected / SRA / OBA / truth (mm)");
    for (ci, p) in rows[0].panels.iter().enumerate() {
        text(
            &mut out,
            x0 + col_w * (ci as f64 + 0.5),
            y0 - 8.0,
            "middle",
            &p.title,
        );
    }
    for (ri, row) in rows.iter().enumerate() {
        let ry = y0 + row_h * ri as f64;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" \
             transform=\"rotate(-90 {:.1} {:.1})\">{}</text>",
            x0 - 12.0,
            ry + row_h / 2.0,
            x0 - 12.0,
            ry + row_h / 2.0,
            row.label
        );
        for (ci, p) in row.panels.iter().enumerate() {
            let cell = ((col_w - 8.0) / p.w as f64).min((row_h - 8.0) / p.h as f64);
            let gx = x0 + col_w * ci as f64 + (col_w - cell * p.w as f64) / 2.0;
            let gy = ry + (row_h - cell * p.h as f64) / 2.0;
            for r in 0..p.h {
                for c in 0..p.w {
                    let v = p.cells[r * p.w + c].max(0.0);
                    let t = if v_max > 0.0 { v / v_max } else { 0.0 };
                    let _ = writeln!(
                        out,
                        "<rect class=\"cell\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" \
                         height=\"{:.2}\" fill=\"{}\"/>",
                        gx + c as f64 * cell,
                        gy + r as f64 * cell,
                        cell,
                        cell,
                        colormap(t)
                    );
                }
            }
            let _ = writeln!(
                out,
                "<rect x=\"{gx:.2}\" y=\"{gy:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"none\" stroke=\"#888\"/>",
                cell * p.w as f64,
                cell * p.h as f64
            );
        }
    }
    // legend: vertical ramp from 0 (bottom) to the shared max (top)
    let lx = WIDTH - MARGIN_R - legend_w + 24.0;
    let steps = 32;
    let step_h = area_h / steps as f64;
    for i in 0..steps {
        let t = 1.0 - (i as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>",
            y0 + step_h * i as f64,
            step_h + 0.5,
            colormap(t)
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{lx:.2}\" y=\"{y0:.2}\" width=\"16\" height=\"{area_h:.2}\" \
         fill=\"none\" stroke=\"black\"/>"
    );
    text(&mut out, lx + 22.0, y0 + area_h + 4.0, "start", "0");
    text(
        &mut out,
        lx + 22.0,
        y0 + 10.0,
        "start",
        &format!("{v_max:.2}"),
    );
    out.push_str("</svg>\n");
    Ok(out)
}
