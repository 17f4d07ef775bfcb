//! Minimal SVG line charts with a log₁₀ y axis.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Values at or below this are drawn at the bottom of the chart.
pub const LOG_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Series with the same label share a colour and one legend entry.
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plot {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical marker lines, e.g. prescribed settling times.
    pub markers: Vec<f64>,
}

fn log_value(v: f64) -> f64 {
    v.max(LOG_FLOOR).log10()
}

/// Render `plot` to an SVG string.
pub fn svg_document(plot: &Plot) -> Result<String> {
    if plot.series.is_empty() || plot.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptyData("plot has no data points"));
    }
    let points = plot.series.iter().flat_map(|s| s.points.iter());
    let (mut t_max, mut y_lo, mut y_hi) = (0.0_f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, v) in points {
        t_max = t_max.max(t);
        let l = log_value(v);
        y_lo = y_lo.min(l);
        y_hi = y_hi.max(l);
    }
    for &m in &plot.markers {
        t_max = t_max.max(m);
    }
    if t_max <= 0.0 {
        t_max = 1.0;
    }
    let (y_lo, y_hi) = (y_lo.floor(), y_hi.ceil().max(y_lo.floor() + 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + pw * t / t_max;
    let sy = |l: f64| TOP + ph * (y_hi - l) / (y_hi - y_lo);

    let mut labels: Vec<&str> = Vec::new();
    for s in &plot.series {
        if !labels.contains(&s.label.as_str()) {
            labels.push(&s.label);
        }
    }
    let colour = |label: &str| PALETTE[labels.iter().position(|l| *l == label).unwrap_or(0) % PALETTE.len()];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&plot.title));
    let _ = writeln!(svg, r#"<rect class="frame" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    let mut decade = y_lo as i64;
    let step = (((y_hi - y_lo) / 8.0).ceil() as i64).max(1);
    while decade as f64 <= y_hi {
        let y = sy(decade as f64);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{decade}</text>"#, LEFT - 6.0, y + 4.0);
        decade += step;
    }
    for i in 0..=5 {
        let t = t_max * i as f64 / 5.0;
        let x = sx(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, trim_float(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">log10 {}</text>"#,
        escape(&plot.y_label),
        y = TOP + ph / 2.0
    );

    for &m in &plot.markers {
        let x = sx(m);
        let _ = writeln!(
            svg,
            r##"<line class="tp-marker" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#555555" stroke-dasharray="4 3"/>"##,
            TOP + ph
        );
    }
    for s in &plot.series {
        let pts: Vec<String> = s.points.iter().map(|&(t, v)| format!("{:.2},{:.2}", sx(t), sy(log_value(v)))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            colour(&s.label),
            pts.join(" ")
        );
    }
    let lx = LEFT + pw + 15.0;
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#, lx + 22.0, colour(label));
        let _ = writeln!(svg, r#"<text class="legend" x="{}" y="{}">{}</text>"#, lx + 28.0, y + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render and write; nothing is written when the plot is empty.
pub fn render_svg(plot: &Plot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = svg_document(plot)?;
    std::fs::write(path, doc).map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series_and_one_line_per_marker() {
        let plot = Plot {
            title: "demo".into(),
            y_label: "error".into(),
            series: (0..3)
                .map(|i| Series {
                    label: format!("s{i}"),
                    points: vec![(0.0, 1.0), (0.5, 1e-3), (1.0, 0.0)],
                })
                .collect(),
            markers: vec![0.5, 1.0],
        };
        let svg = svg_document(&plot).unwrap();
        assert_eq!(svg.matches("class=\"curve\"").count(), 3);
        assert_eq!(svg.matches("class=\"tp-marker\"").count(), 2);
        assert_eq!(svg.matches("class=\"legend\"").count(), 3);
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn shared_labels_share_a_legend_entry() {
        let s = |l: &str| Series {
            label: l.into(),
            points: vec![(0.0, 1.0), (1.0, 0.1)],
        };
        let plot = Plot {
            series: vec![s("a"), s("a"), s("b")],
            ..Plot::default()
        };
        let svg = svg_document(&plot).unwrap();
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
    }

    #[test]
    fn empty_plot_is_an_error() {
        assert!(matches!(svg_document(&Plot::default()), Err(Error::EmptyData(_))));
    }
}
