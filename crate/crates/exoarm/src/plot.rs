//! Static SVG rendering of simulation traces: a position panel over a
//! velocity panel, one polyline per joint.

use crate::sim::SimTrace;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 300.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_TOP: f64 = 30.0;
const GAP: f64 = 50.0;
const MAX_POINTS: usize = 2000;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Panel {
    top: f64,
    label: &'static str,
    series: Vec<Vec<(f64, f64)>>,
}

/// Renders the trace as a two-panel SVG: q(t) on top, qd(t) below.
pub fn trace_svg(trace: &SimTrace) -> String {
    let n = trace.rows.first().map_or(0, |r| r.q.len());
    let stride = (trace.rows.len() / MAX_POINTS).max(1);
    let sample = |f: &dyn Fn(&crate::sim::TraceRow) -> f64| -> Vec<(f64, f64)> {
        trace
            .rows
            .iter()
            .step_by(stride)
            .chain(trace.rows.last())
            .map(|r| (r.t, f(r)))
            .collect()
    };

    let panels = [
        Panel {
            top: MARGIN_TOP,
            label: "position (rad)",
            series: (0..n).map(|j| sample(&|r| r.q[j])).collect(),
        },
        Panel {
            top: MARGIN_TOP + PANEL_HEIGHT + GAP,
            label: "velocity (rad/s)",
            series: (0..n).map(|j| sample(&|r| r.qd[j])).collect(),
        },
    ];

    let total_height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + GAP + 50.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_height}\" \
         viewBox=\"0 0 {WIDTH} {total_height}\">\n<rect width=\"100%\" height=\"100%\" \
         fill=\"white\"/>\n"
    ));
    let t_max = trace.end_time().max(f64::MIN_POSITIVE);
    for panel in &panels {
        render_panel(&mut svg, panel, t_max, n);
    }
    svg.push_str("</svg>\n");
    svg
}

fn render_panel(svg: &mut String, panel: &Panel, t_max: f64, n: usize) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &panel.series {
        for &(_, y) in s {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() || y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let x_of = |t: f64| MARGIN_LEFT + plot_w * t / t_max;
    let y_of = |v: f64| panel.top + PANEL_HEIGHT * (1.0 - (v - y_min) / (y_max - y_min));

    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{}\" width=\"{plot_w}\" height=\"{PANEL_HEIGHT}\" \
         fill=\"none\" stroke=\"#333\"/>\n",
        panel.top
    ));
    // Axis ticks.
    for k in 0..=5 {
        let t = t_max * k as f64 / 5.0;
        let x = x_of(t);
        let y = panel.top + PANEL_HEIGHT;
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>\n\
             <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{t:.1}</text>\n",
            y + 5.0,
            y + 18.0
        ));
        let v = y_min + (y_max - y_min) * k as f64 / 5.0;
        let yv = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{yv:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{yv:.2}\" stroke=\"#333\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            yv + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 {:.2} {:.2})\">{}</text>\n",
        18.0,
        panel.top + PANEL_HEIGHT / 2.0,
        18.0,
        panel.top + PANEL_HEIGHT / 2.0,
        panel.label
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">time (s)</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        panel.top + PANEL_HEIGHT + 38.0
    ));

    for (j, s) in panel.series.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        let points: Vec<String> =
            s.iter().map(|&(t, v)| format!("{:.2},{:.2}", x_of(t), y_of(v))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
    }
    // Legend.
    for j in 0..n {
        let color = COLORS[j % COLORS.len()];
        let y = panel.top + 16.0 + 18.0 * j as f64;
        let x = WIDTH - MARGIN_RIGHT + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">joint {}</text>\n",
            x + 24.0,
            x + 30.0,
            y + 4.0,
            j + 1
        ));
    }
}
