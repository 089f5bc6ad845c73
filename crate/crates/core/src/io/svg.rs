//! Minimal SVG line, scatter and polygon plots.

use std::fmt::Write;

use super::records::StepRecord;
use crate::aslip::StepTrace;
use crate::planner::DesiredTrajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
    /// Closed polygon, drawn with a light fill.
    Polygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub style: Style,
}

impl Series {
    pub fn new(label: &str, points: Vec<[f64; 2]>, style: Style) -> Self {
        Self {
            label: label.to_string(),
            points,
            style,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn bounds(series: &[Series]) -> [f64; 4] {
    let mut b = [
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    ];
    for p in series.iter().flat_map(|s| &s.points) {
        if p[0].is_finite() && p[1].is_finite() {
            b = [
                b[0].min(p[0]),
                b[1].max(p[0]),
                b[2].min(p[1]),
                b[3].max(p[1]),
            ];
        }
    }
    if !b[0].is_finite() {
        return [0.0, 1.0, 0.0, 1.0];
    }
    for i in [0, 2] {
        let pad = 0.05 * (b[i + 1] - b[i]).max(1e-9);
        b[i] -= pad;
        b[i + 1] += pad;
    }
    b
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn render(&self) -> String {
        let [x0, x1, y0, y1] = bounds(&self.series);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        for i in 0..=4 {
            let a = i as f64 / 4.0;
            let (x, y) = (x0 + a * (x1 - x0), y0 + a * (y1 - y0));
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(x),
                HEIGHT - MARGIN + 16.0,
                tick(x)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                sy(y) + 4.0,
                tick(y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p[0].is_finite() && p[1].is_finite())
                .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                .collect();
            match s.style {
                Style::Line => {
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
                        pts.join(" ")
                    );
                }
                Style::Polygon => {
                    let _ = writeln!(
                        out,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}"/>"#,
                        pts.join(" ")
                    );
                }
                Style::Points => {
                    for p in &pts {
                        let (x, y) = p.split_once(',').expect("formatted pair");
                        let _ =
                            writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
                    }
                }
            }
            let ly = MARGIN + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
                WIDTH - MARGIN - 6.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Mass position relative to the stance foot against velocity, one plane.
pub fn phase_portrait(traces: &[StepTrace], axis: usize) -> String {
    let name = if axis == 0 { "x" } else { "y" };
    let points = traces
        .iter()
        .flat_map(|t| t.samples.iter())
        .map(|s| [s.pos[axis] - s.stance_foot[axis], s.vel[axis]])
        .collect();
    Plot::new(
        &format!("phase portrait ({name})"),
        &format!("p_{name} [m]"),
        &format!("v_{name} [m/s]"),
    )
    .with(Series::new("aSLIP", points, Style::Line))
    .render()
}

/// Top view of the mass path, the footholds and an optional desired path.
pub fn top_view(records: &[StepRecord], path: Option<&DesiredTrajectory>) -> String {
    let mut plot = Plot::new("top view", "x [m]", "y [m]")
        .with(Series::new(
            "pre-impact mass",
            records.iter().map(|r| [r.x, r.y]).collect(),
            Style::Line,
        ))
        .with(Series::new(
            "stance feet",
            records.iter().map(|r| [r.x - r.p_x, r.y - r.p_y]).collect(),
            Style::Points,
        ));
    if let (Some(path), Some(last)) = (path, records.last()) {
        let t_end = last.t;
        let pts = path
            .samples()
            .iter()
            .filter(|s| s.t <= t_end)
            .map(|s| [s.x_d, s.y_d])
            .collect();
        plot = plot.with(Series::new("desired path", pts, Style::Line));
    }
    plot.render()
}

pub fn height_series(traces: &[StepTrace]) -> String {
    let points = traces
        .iter()
        .flat_map(|t| t.samples.iter())
        .map(|s| [s.t, s.pos[2]])
        .collect();
    Plot::new("mass height", "t [s]", "z [m]")
        .with(Series::new("z", points, Style::Line))
        .render()
}
