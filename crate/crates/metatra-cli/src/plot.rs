//! Deterministic SVG rendering of one window: observed past, ground-truth
//! future, and the K sampled predictions, with a legend and a scale bar.

use metatra_core::cvae_head::PredictionOutput;
use metatra_core::data::TrajectoryWindow;

const PAST_COLOR: &str = "#1f77b4";
const TRUTH_COLOR: &str = "#2ca02c";
const PRED_COLOR: &str = "#d62728";

fn polyline(points: &[(f64, f64)], color: &str, width: f64, dash: Option<&str>) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
    let dash_attr = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
    format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash_attr}/>\n",
        pts.join(" ")
    )
}

/// Render a window and its sampled predictions to an SVG document.
/// Output bytes are a pure function of the inputs.
pub fn render_window_svg(window: &TrajectoryWindow, predictions: &[PredictionOutput]) -> String {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut extend = |x: f64, y: f64| {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    };
    for agent in window.agents.iter().filter(|a| a.valid) {
        for row in agent.past.rows().into_iter().chain(agent.future.rows()) {
            extend(row[0], row[1]);
        }
    }
    for p in predictions {
        for y_hat in p.y_hat.iter().flatten() {
            for row in y_hat.rows() {
                extend(row[0], row[1]);
            }
        }
    }
    if !min_x.is_finite() {
        extend(0.0, 0.0);
        extend(1.0, 1.0);
    }
    let pad = 0.05 * ((max_x - min_x).max(max_y - min_y)).max(1.0);
    min_x -= pad;
    min_y -= pad;
    max_x += pad;
    max_y += pad;

    let size = 640.0;
    let span = (max_x - min_x).max(max_y - min_y);
    let scale = size / span;
    // SVG y grows downward; flip so the scene reads naturally.
    let tx = |x: f64| (x - min_x) * scale;
    let ty = |y: f64| size - (y - min_y) * scale;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{size}\" height=\"{size}\" fill=\"#ffffff\"/>\n"
    ));

    for p in predictions {
        for y_hat in p.y_hat.iter().flatten() {
            let pts: Vec<(f64, f64)> = y_hat.rows().into_iter().map(|r| (tx(r[0]), ty(r[1]))).collect();
            svg.push_str(&polyline(&pts, PRED_COLOR, 1.0, None));
        }
    }
    for agent in window.agents.iter().filter(|a| a.valid) {
        let past: Vec<(f64, f64)> =
            agent.past.rows().into_iter().map(|r| (tx(r[0]), ty(r[1]))).collect();
        svg.push_str(&polyline(&past, PAST_COLOR, 2.0, None));
        // connect last observation to the future for readability
        let mut truth: Vec<(f64, f64)> = vec![past[past.len() - 1]];
        truth.extend(agent.future.rows().into_iter().map(|r| (tx(r[0]), ty(r[1]))));
        svg.push_str(&polyline(&truth, TRUTH_COLOR, 2.0, Some("6,4")));
    }

    // legend
    let legend = [
        (PAST_COLOR, "observed past"),
        (TRUTH_COLOR, "ground truth"),
        (PRED_COLOR, "sampled predictions"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = 20.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"12\" y1=\"{y}\" x2=\"40\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"46\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{label}</text>\n",
            y + 4.0
        ));
    }
    // scale bar: one scene unit
    let bar = scale;
    let y0 = size - 16.0;
    svg.push_str(&format!(
        "  <line x1=\"12\" y1=\"{y0}\" x2=\"{:.3}\" y2=\"{y0}\" stroke=\"#000000\" stroke-width=\"2\"/>\n",
        12.0 + bar
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.3}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\">1 unit</text>\n",
        16.0 + bar,
        y0 + 4.0
    ));
    svg.push_str("</svg>\n");
    svg
}
