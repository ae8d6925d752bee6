//! Static SVG frame of a trajectory: nodes coloured by state at a given time.

use std::fmt::Write as _;

use chase_escape::dynamics::{EventRecord, Network, NodeState, Transition};
use chase_escape::geometry::GilbertGraph;

/// States at time `t`, replayed from the initial condition and the trace.
pub fn states_at(graph: &GilbertGraph, trace: &[EventRecord], t: f64) -> Vec<NodeState> {
    let mut states: Vec<NodeState> = (0..graph.node_count()).map(|v| graph.initial_state(v)).collect();
    for e in trace.iter().take_while(|e| e.time <= t) {
        states[e.node] = match e.transition {
            Transition::Infection => NodeState::Infected,
            Transition::Patch => NodeState::Knight,
        };
    }
    states
}

/// Projects onto the first two coordinates (1-d boxes are drawn on a line).
pub fn render(graph: &GilbertGraph, states: &[NodeState], time: f64) -> String {
    let side = graph.config().box_spec().side;
    let size = 800.0;
    let scale = size / side;
    let xy = |v: usize| {
        let p = graph.config().position(v);
        let x = (p[0] + side / 2.0) * scale;
        let y = p.get(1).map_or(size / 2.0, |y| size - (y + side / 2.0) * scale);
        (x, y)
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r##"<g stroke="#d0d0d0" stroke-width="0.6">"##);
    let torus = graph.config().box_spec().topology == chase_escape::geometry::Topology::Torus;
    for u in 0..graph.node_count() {
        for &v in graph.neighbors(u).iter().filter(|&&v| v > u) {
            let ((x1, y1), (x2, y2)) = (xy(u), xy(v));
            // wrapped edges would cross the whole picture
            if torus && ((x1 - x2).abs() > size / 2.0 || (y1 - y2).abs() > size / 2.0) {
                continue;
            }
            let _ = writeln!(svg, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        }
    }
    svg.push_str("</g>\n");
    for (v, s) in states.iter().enumerate() {
        let (x, y) = xy(v);
        let fill = match s {
            NodeState::Susceptible => "#9a9a9a",
            NodeState::Infected => "#d62728",
            NodeState::Knight => "#1f4fb4",
        };
        let radius = if v == graph.config().origin_index() { 5.0 } else { 3.0 };
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{radius}" fill="{fill}"/>"#);
    }
    let _ = writeln!(svg, r#"<text x="10" y="20" font-size="14">t = {time:.4}</text>"#);
    svg.push_str("</svg>\n");
    svg
}
