//! Run-log plotting: parses the simulator CSV and renders a self-contained
//! SVG with no dependencies beyond the standard library.

use sixwheel::RunLog;

use crate::{Fail, PlotKind};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 18.0;
const MARGIN_BOTTOM: f64 = 42.0;

/// The columns the plots need, pulled out of the full log format.
struct Table {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    lat: Vec<f64>,
    gov: Vec<f64>,
    pitch: Vec<f64>,
    pitch_est: Vec<f64>,
}

fn parse_csv(text: &str) -> Result<Table, Fail> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RunLog::CSV_HEADER => {}
        Some(header) => {
            return Err(Fail::Input(format!(
                "unexpected CSV header {header:?}; want {:?}",
                RunLog::CSV_HEADER
            )))
        }
        None => return Err(Fail::Input("empty CSV".into())),
    }
    let mut table = Table {
        t: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        lat: Vec::new(),
        gov: Vec::new(),
        pitch: Vec::new(),
        pitch_est: Vec::new(),
    };
    let n_cols = RunLog::CSV_HEADER.split(',').count();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Fail::Input(format!(
                "row {}: {} fields, want {n_cols}",
                k + 1,
                fields.len()
            )));
        }
        let num = |idx: usize, name: &str| -> Result<f64, Fail> {
            fields[idx].parse().map_err(|_| {
                Fail::Input(format!("row {}: bad {name} value {:?}", k + 1, fields[idx]))
            })
        };
        table.t.push(num(0, "t")?);
        table.x.push(num(1, "x")?);
        table.y.push(num(2, "y")?);
        table.lat.push(num(4, "lat_off")?);
        table.gov.push(num(9, "gov")?);
        table.pitch.push(num(11, "pitch")?);
        table.pitch_est.push(num(12, "pitch_est")?);
    }
    if table.t.is_empty() {
        return Err(Fail::Input("CSV has no data rows".into()));
    }
    Ok(table)
}

pub fn render(
    kind: PlotKind,
    csv_text: &str,
    path_overlay: Option<&[(f64, f64)]>,
) -> Result<String, Fail> {
    let table = parse_csv(csv_text)?;
    let svg = match kind {
        PlotKind::Trajectory => trajectory_svg(&table, path_overlay),
        PlotKind::Speed => {
            let pts: Vec<(f64, f64)> =
                table.t.iter().copied().zip(table.gov.iter().copied()).collect();
            series_svg("governed speed [m/s]", &[(&pts, "#2ca02c", "speed")], true)
        }
        PlotKind::Pitch => {
            let truth: Vec<(f64, f64)> =
                table.t.iter().copied().zip(table.pitch.iter().copied()).collect();
            let est: Vec<(f64, f64)> =
                table.t.iter().copied().zip(table.pitch_est.iter().copied()).collect();
            series_svg(
                "body pitch [deg]",
                &[(&truth, "#1f77b4", "true"), (&est, "#d62728", "estimated")],
                true,
            )
        }
        PlotKind::Error => {
            let pts: Vec<(f64, f64)> =
                table.t.iter().map(|&t| t).zip(table.lat.iter().map(|v| v.abs())).collect();
            series_svg("|lateral offset| [m]", &[(&pts, "#d62728", "|lateral|")], true)
        }
    };
    Ok(svg)
}

struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    /// Data ranges padded 5% each side; degenerate spans get a half-unit.
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Frame {
        let pad = |lo: f64, hi: f64| {
            let span = hi - lo;
            if span <= 0.0 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo - 0.05 * span, hi + 0.05 * span)
            }
        };
        let (xmin, xmax) = pad(xmin, xmax);
        let (ymin, ymax) = pad(ymin, ymax);
        Frame { xmin, xmax, ymin, ymax }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.xmin) / (self.xmax - self.xmin) * self.plot_w()
    }

    /// Screen y grows downward; data y grows upward.
    fn sy(&self, y: f64) -> f64 {
        MARGIN_TOP + (self.ymax - y) / (self.ymax - self.ymin) * self.plot_h()
    }

    fn plot_w(&self) -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_h(&self) -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }
}

fn polyline(frame: &Frame, pts: &[(f64, f64)], color: &str) -> String {
    let mut points = String::new();
    for &(x, y) in pts {
        points.push_str(&format!("{:.2},{:.2} ", frame.sx(x), frame.sy(y)));
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.trim_end()
    )
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" \
         width=\"{:.0}\" height=\"{:.0}\" fill=\"none\" stroke=\"#444\"/>\n",
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    )
}

fn axis_labels(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let bottom = HEIGHT - MARGIN_BOTTOM;
    format!(
        concat!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" ",
            "font-family=\"sans-serif\">{}</text>\n",
            "<text x=\"14\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" ",
            "font-family=\"sans-serif\" transform=\"rotate(-90 14 {})\">{}</text>\n",
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" font-family=\"sans-serif\">{:.3}</text>\n",
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\" ",
            "font-family=\"sans-serif\">{:.3}</text>\n",
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\" ",
            "font-family=\"sans-serif\">{:.3}</text>\n",
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\" ",
            "font-family=\"sans-serif\">{:.3}</text>\n",
        ),
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 10.0,
        x_label,
        (MARGIN_TOP + bottom) / 2.0,
        (MARGIN_TOP + bottom) / 2.0,
        y_label,
        MARGIN_LEFT,
        bottom + 14.0,
        frame.xmin,
        WIDTH - MARGIN_RIGHT,
        bottom + 14.0,
        frame.xmax,
        MARGIN_LEFT - 4.0,
        bottom,
        frame.ymin,
        MARGIN_LEFT - 4.0,
        MARGIN_TOP + 10.0,
        frame.ymax,
    )
}

/// Time-series plot of one or more named lines sharing the time axis.
fn series_svg(y_label: &str, series: &[(&[(f64, f64)], &str, &str)], zero_line: bool) -> String {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (pts, _, _) in series {
        for &(x, y) in *pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if zero_line {
        ymin = ymin.min(0.0);
        ymax = ymax.max(0.0);
    }
    let frame = Frame::new(xmin, xmax, ymin, ymax);
    let mut svg = svg_open();
    if zero_line {
        let y0 = frame.sy(0.0);
        svg.push_str(&format!(
            "<line class=\"zero-line\" x1=\"{MARGIN_LEFT}\" y1=\"{y0:.2}\" \
             x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"#ccc\"/>\n",
            WIDTH - MARGIN_RIGHT
        ));
    }
    for (pts, color, _) in series {
        svg.push_str(&polyline(&frame, pts, color));
    }
    // Small color-keyed legend in the top-right corner of the plot area.
    for (k, (_, color, name)) in series.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"10\" text-anchor=\"end\" \
             font-family=\"sans-serif\" fill=\"{color}\">{name}</text>\n",
            WIDTH - MARGIN_RIGHT - 6.0,
            MARGIN_TOP + 14.0 + 12.0 * k as f64,
        ));
    }
    svg.push_str(&axis_labels(&frame, "t [s]", y_label));
    svg.push_str("</svg>\n");
    svg
}

/// Plan-view plot with equal axis scaling so the geometry is not distorted.
fn trajectory_svg(table: &Table, path_overlay: Option<&[(f64, f64)]>) -> String {
    let trace: Vec<(f64, f64)> =
        table.x.iter().copied().zip(table.y.iter().copied()).collect();
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for pts in [Some(trace.as_slice()), path_overlay].into_iter().flatten() {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    // Expand the narrow axis around its center until meters per screen unit
    // match in both directions.
    let mut frame = Frame::new(xmin, xmax, ymin, ymax);
    let px_per_x = frame.plot_w() / (frame.xmax - frame.xmin);
    let px_per_y = frame.plot_h() / (frame.ymax - frame.ymin);
    if px_per_x > px_per_y {
        let need = frame.plot_w() / px_per_y;
        let cx = (frame.xmin + frame.xmax) / 2.0;
        frame.xmin = cx - need / 2.0;
        frame.xmax = cx + need / 2.0;
    } else {
        let need = frame.plot_h() / px_per_x;
        let cy = (frame.ymin + frame.ymax) / 2.0;
        frame.ymin = cy - need / 2.0;
        frame.ymax = cy + need / 2.0;
    }

    let mut svg = svg_open();
    if let Some(path) = path_overlay {
        let mut points = String::new();
        for &(x, y) in path {
            points.push_str(&format!("{:.2},{:.2} ", frame.sx(x), frame.sy(y)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#888\" stroke-width=\"1\" \
             stroke-dasharray=\"6 3\" points=\"{}\"/>\n",
            points.trim_end()
        ));
    }
    svg.push_str(&polyline(&frame, &trace, "#1f77b4"));
    svg.push_str(&axis_labels(&frame, "x [m]", "y [m]"));
    svg.push_str("</svg>\n");
    svg
}
