use super::*;
use crate::netstats::{AdnGraph, CorrelationMatrix, Edge};
use crate::perturb::{ComparisonRow, ComparisonTable, RankCorrelations};
use crate::registry::{AttributeKind, ValueKind};
use crate::survey::{Cell, Column, DataMatrix, Unit};

fn matrix(rows: &[(&str, f64)]) -> DataMatrix {
    let columns = vec![
        Column {
            name: "speaker_party".into(),
            kind: AttributeKind::Contextual,
            value_kind: ValueKind::Categorical,
        },
        Column {
            name: "score".into(),
            kind: AttributeKind::Measured,
            value_kind: ValueKind::UnitFloat,
        },
    ];
    let mut m = DataMatrix::new((0..rows.len()).map(Unit::synthetic).collect(), columns);
    for (cells, (party, v)) in m.cells.iter_mut().zip(rows) {
        cells[0] = Cell::Category(party.to_string());
        cells[1] = Cell::Number(*v);
    }
    m
}

fn counts(chart: &Chart, group: &str) -> Vec<usize> {
    chart
        .get("score_distribution.csv")
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some(group))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

fn graph(edges: &[(&str, &str, f64)]) -> AdnGraph {
    AdnGraph {
        nodes: vec!["a".into(), "b".into(), "c".into()],
        edges: edges
            .iter()
            .map(|(s, d, w)| Edge {
                src: s.to_string(),
                dst: d.to_string(),
                weight: *w,
            })
            .collect(),
        prune: None,
        warnings: vec![],
    }
}

#[test]
fn bin_edges() {
    let m = matrix(&[
        ("D", 0.0),
        ("D", 0.05),
        ("D", 0.15),
        ("D", 0.999),
        ("D", 1.0),
        ("D", 0.5),
    ]);
    let c = counts(
        &score_distribution(&m, &["score".into()], "speaker_party").unwrap(),
        "D",
    );
    assert_eq!(c.len(), BINS);
    assert_eq!((c[0], c[1], c[3], c[10], c[19]), (1, 1, 1, 1, 2));
}

#[test]
fn identical_groups_identical_histograms() {
    let vals = [0.1, 0.42, 0.42, 0.9];
    let rows: Vec<_> = vals
        .iter()
        .map(|v| ("Democratic", *v))
        .chain(vals.iter().map(|v| ("Republican", *v)))
        .collect();
    let chart = score_distribution(&matrix(&rows), &["score".into()], "speaker_party").unwrap();
    assert_eq!(counts(&chart, "Democratic"), counts(&chart, "Republican"));
    assert!(chart.get("score_distribution.svg").unwrap().contains("mean"));
}

#[test]
fn single_group_has_no_comparison() {
    let chart = score_distribution(
        &matrix(&[("Democratic", 0.3), ("Democratic", 0.6)]),
        &["score".into()],
        "speaker_party",
    )
    .unwrap();
    assert_eq!(chart.get("score_distribution_means.csv").unwrap().lines().count(), 2);
    assert!(!chart.get("score_distribution.svg").unwrap().contains(" mean "));
}

#[test]
fn empty_group_is_noted() {
    let mut m = matrix(&[("Democratic", 0.3), ("Republican", 0.6)]);
    m.cells[1][1] = Cell::Missing;
    let chart = score_distribution(&m, &["score".into()], "speaker_party").unwrap();
    assert_eq!(chart.notes.len(), 1);
    assert!(counts(&chart, "Republican").is_empty());
    assert!(score_distribution(&m, &["nope".into()], "speaker_party").is_err());
}

#[test]
fn correlation_bars_values_and_gaps() {
    let mut c =
        CorrelationMatrix::from_values(vec!["x".into(), "y".into()], vec![vec![1.0, -0.4], vec![-0.4, 1.0]]).unwrap();
    c.values[0][1] = None;
    let chart = correlation_bars(&c, &["x".into()], &["x".into(), "y".into()]).unwrap();
    assert_eq!(chart.get(".csv").unwrap(), "focus,against,correlation\nx,x,1\nx,y,\n");
    assert!(chart.get(".svg").unwrap().contains("×"));
    assert!(correlation_bars(&c, &["q".into()], &["x".into()]).is_err());
}

#[test]
fn empty_network_has_nodes_only() {
    let dot = to_dot(&graph(&[]));
    assert!(dot.contains("\"a\";") && !dot.contains("->"));
    assert!(render_network(&graph(&[]), "adn", false).is_err());
    assert_eq!(render_network(&graph(&[]), "adn", true).unwrap().artifacts.len(), 3);
}

#[test]
fn edge_colour_follows_sign() {
    let dot = to_dot(&graph(&[("a", "b", 0.2), ("b", "c", -0.1)]));
    let lines: Vec<&str> = dot.lines().filter(|l| l.contains("->")).collect();
    assert!(lines[0].contains("#1f77b4") && lines[0].contains("penwidth=6.00"));
    assert!(lines[1].contains("#d62728") && lines[1].contains("penwidth=3.00"));
}

#[test]
fn network_output_is_byte_stable() {
    let g = graph(&[("a", "b", 0.2), ("c", "a", 0.05)]);
    assert_eq!(
        render_network(&g, "adn", false).unwrap(),
        render_network(&g.clone(), "adn", false).unwrap()
    );
}

#[test]
fn comparison_rows() {
    let mut table = ComparisonTable {
        target: "score".into(),
        rows: vec![ComparisonRow {
            given: "clarity".into(),
            correlation: 0.5,
            dependency: 0.02,
            influence: 0.04,
        }],
        rank_correlations: RankCorrelations {
            correlation_vs_dependency: None,
            correlation_vs_influence: None,
            dependency_vs_influence: None,
        },
    };
    let chart = comparison_chart(&table).unwrap();
    assert_eq!(chart.get(".svg").unwrap().matches("<rect").count(), 1 + 3);
    assert_eq!(chart.get(".csv").unwrap().lines().count(), 2);
    table.rows.clear();
    assert!(comparison_chart(&table).is_err());
}

#[test]
fn write_layout() {
    let dir = tempfile::tempdir().unwrap();
    let chart = render_network(&graph(&[("a", "b", 0.2)]), "adn", false).unwrap();
    chart.write(dir.path()).unwrap();
    for p in ["csv/adn.csv", "svg/adn.svg", "dot/adn.dot"] {
        assert!(dir.path().join(p).exists(), "{p}");
    }
}

#[test]
fn every_svg_has_a_csv() {
    let m = matrix(&[("Democratic", 0.3), ("Republican", 0.6), ("Democratic", 0.8)]);
    let c = CorrelationMatrix::from_values(
        vec!["speaker_party".into(), "score".into(), "clarity".into()],
        vec![vec![1.0, 0.2, 0.1], vec![0.2, 1.0, 0.7], vec![0.1, 0.7, 1.0]],
    )
    .unwrap();
    let table = ComparisonTable {
        target: "score".into(),
        rows: vec![ComparisonRow {
            given: "clarity".into(),
            correlation: 0.7,
            dependency: 0.1,
            influence: 0.02,
        }],
        rank_correlations: RankCorrelations {
            correlation_vs_dependency: None,
            correlation_vs_influence: None,
            dependency_vs_influence: None,
        },
    };
    let charts = [
        score_distribution(&m, &["score".into()], "speaker_party").unwrap(),
        correlation_bars(&c, &["score".into()], &["clarity".into(), "speaker_party".into()]).unwrap(),
        render_network(&graph(&[("a", "b", 0.2)]), "adn", false).unwrap(),
        comparison_chart(&table).unwrap(),
    ];
    for chart in &charts {
        for svg in chart.artifacts.iter().filter(|a| a.path.ends_with(".svg")) {
            let stem = svg.path.trim_start_matches("svg/").trim_end_matches(".svg");
            assert!(
                chart.artifacts.iter().any(|a| a.path == format!("csv/{stem}.csv")),
                "{} has no CSV",
                svg.path
            );
        }
    }
}
