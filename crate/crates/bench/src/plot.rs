//! Minimal SVG line charts and gnuplot data files.

use crate::profile::ProfileTable;
use crate::suite::RunRecord;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    /// Draw steps instead of straight segments.
    pub steps: bool,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tr(v: f64, scale: Scale) -> Option<f64> {
    match scale {
        Scale::Linear => v.is_finite().then_some(v),
        Scale::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
    }
}

pub fn svg_chart(chart: &Chart, series: &[Series]) -> String {
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter_map(|&(x, y)| Some((tr(x, chart.x_scale)?, tr(y, chart.y_scale)?))).collect())
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    out += &format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n");
    out += &format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        LEFT + pw / 2.0,
        escape(&chart.title)
    );
    out += &format!("<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n");
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let label = |v: f64, s: Scale| match s {
            Scale::Linear => format!("{v:.3}"),
            Scale::Log => format!("1e{v:.1}"),
        };
        out += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            px(xv),
            TOP + ph + 18.0,
            label(xv, chart.x_scale)
        );
        out += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 6.0,
            py(yv) + 4.0,
            label(yv, chart.y_scale)
        );
    }
    out += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        LEFT + pw / 2.0,
        H - 12.0,
        escape(&chart.x_label)
    );
    out += &format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut path = String::new();
        for (j, &(x, y)) in p.iter().enumerate() {
            if j == 0 {
                path += &format!("M{:.2},{:.2}", px(x), py(y));
            } else {
                if chart.steps {
                    path += &format!(" L{:.2},{:.2}", px(x), py(p[j - 1].1));
                }
                path += &format!(" L{:.2},{:.2}", px(x), py(y));
            }
        }
        out += &format!("<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n");
        let ly = TOP + 16.0 + 18.0 * i as f64;
        out += &format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            W - RIGHT + 10.0,
            W - RIGHT + 30.0
        );
        out += &format!("<text x=\"{}\" y=\"{}\">{}</text>\n", W - RIGHT + 36.0, ly + 4.0, escape(&s.label));
    }
    out += "</svg>\n";
    out
}

/// Blocks separated by two blank lines, one per series, for `plot ... index i`.
pub fn gnuplot_data(series: &[Series]) -> String {
    let mut out = String::new();
    for (i, s) in series.iter().enumerate() {
        if i > 0 {
            out += "\n\n";
        }
        out += &format!("# {}\n", s.label);
        for (x, y) in &s.points {
            out += &format!("{x} {y}\n");
        }
    }
    out
}

pub fn profile_series(table: &ProfileTable) -> Vec<Series> {
    table
        .solvers
        .iter()
        .zip(&table.curves)
        .map(|(s, c)| Series { label: s.clone(), points: table.alpha.iter().copied().zip(c.iter().copied()).collect() })
        .collect()
}

pub fn profile_chart(table: &ProfileTable, title: &str) -> String {
    let chart = Chart {
        title: format!("{title} (tau = {:e})", table.tau),
        x_label: "alpha".into(),
        y_label: "fraction of problems".into(),
        x_scale: Scale::Log,
        y_scale: Scale::Linear,
        steps: true,
    };
    svg_chart(&chart, &profile_series(table))
}

/// Best value against evaluations, one line per run.
pub fn history_chart(records: &[RunRecord], title: &str) -> String {
    let series: Vec<Series> = records
        .iter()
        .map(|r| Series {
            label: r.solver.clone(),
            points: r.history.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect(),
        })
        .collect();
    let chart = Chart {
        title: title.into(),
        x_label: "evaluations".into(),
        y_label: "best F".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Log,
        steps: false,
    };
    svg_chart(&chart, &series)
}
