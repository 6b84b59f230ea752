use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write;

use super::svg::{Svg, NEGATIVE, POSITIVE};
use super::Chart;
use crate::error::{Error, Result};
use crate::netstats::AdnGraph;
use crate::survey::csv_field;

/// Pen width of the strongest edge.
const MAX_PENWIDTH: f64 = 6.0;

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn pen_widths(graph: &AdnGraph) -> Vec<f64> {
    let max = graph.edges.iter().map(|e| e.weight.abs()).fold(0.0, f64::max);
    graph
        .edges
        .iter()
        .map(|e| {
            if max > 0.0 {
                MAX_PENWIDTH * e.weight.abs() / max
            } else {
                1.0
            }
        })
        .collect()
}

/// DOT digraph with one `src -> dst` line per edge in rank order. Pen width is
/// proportional to |weight| (the strongest edge gets 6); positive edges are
/// blue and negative ones red.
pub fn to_dot(graph: &AdnGraph) -> String {
    let mut out = String::from("digraph adn {\n  rankdir=LR;\n  node [shape=box, fontname=\"Helvetica\"];\n");
    for n in &graph.nodes {
        let _ = writeln!(out, "  {};", dot_id(n));
    }
    for (e, pen) in graph.edges.iter().zip(pen_widths(graph)) {
        let color = if e.weight < 0.0 { NEGATIVE } else { POSITIVE };
        let _ = writeln!(
            out,
            "  {} -> {} [penwidth={pen:.2}, color=\"{color}\", label=\"{:.3}\"];",
            dot_id(&e.src),
            dot_id(&e.dst),
            e.weight
        );
    }
    out.push_str("}\n");
    out
}

fn edges_csv(graph: &AdnGraph) -> String {
    let mut out = String::from("src,dst,weight\n");
    for e in &graph.edges {
        let _ = writeln!(out, "{},{},{}", csv_field(&e.src), csv_field(&e.dst), e.weight);
    }
    out
}

fn circular_svg(graph: &AdnGraph) -> String {
    let size = 640.0;
    let (cx, cy, radius) = (size / 2.0, size / 2.0, size / 2.0 - 110.0);
    let n = graph.nodes.len().max(1) as f64;
    let pos: HashMap<&str, (f64, f64)> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let angle = 2.0 * PI * k as f64 / n - PI / 2.0;
            (name.as_str(), (cx + radius * angle.cos(), cy + radius * angle.sin()))
        })
        .collect();
    let node_r = 7.0;
    let mut svg = Svg::new(size, size);
    for (e, pen) in graph.edges.iter().zip(pen_widths(graph)) {
        let (x1, y1) = pos[e.src.as_str()];
        let (x2, y2) = pos[e.dst.as_str()];
        let len = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt().max(1e-9);
        let (ux, uy) = ((x2 - x1) / len, (y2 - y1) / len);
        let color = if e.weight < 0.0 { NEGATIVE } else { POSITIVE };
        svg.arrow(
            x1 + ux * node_r,
            y1 + uy * node_r,
            x2 - ux * node_r,
            y2 - uy * node_r,
            color,
            pen.max(0.5),
        );
    }
    for name in &graph.nodes {
        let (x, y) = pos[name.as_str()];
        svg.circle(x, y, node_r, "#f5f5f5");
        let anchor = if x < cx - 1.0 {
            "end"
        } else if x > cx + 1.0 {
            "start"
        } else {
            "middle"
        };
        let dx = match anchor {
            "end" => -10.0,
            "start" => 10.0,
            _ => 0.0,
        };
        let dy = if anchor == "middle" {
            if y < cy {
                -12.0
            } else {
                20.0
            }
        } else {
            4.0
        };
        svg.text(x + dx, y + dy, 11.0, anchor, name);
    }
    svg.finish()
}

/// DOT, circular-layout SVG and edge CSV of a dependency network.
pub fn render_network(graph: &AdnGraph, name: &str, allow_empty: bool) -> Result<Chart> {
    if graph.edges.is_empty() && !allow_empty {
        return Err(Error::data(format!("network `{name}` has no edges")));
    }
    let mut chart = Chart::new(name);
    chart.add("csv", "", edges_csv(graph));
    chart.add("svg", "", circular_svg(graph));
    chart.add("dot", "", to_dot(graph));
    Ok(chart)
}
