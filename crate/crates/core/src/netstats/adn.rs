use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::dependency::DependencyMatrix;
use super::table::Exclusions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prune {
    /// Keep the `n` edges with the largest |weight|.
    TopN(usize),
    /// Keep every edge with |weight| at or above the threshold.
    Threshold(f64),
}

/// Directed edge `src → dst` carrying `D[dst][src]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdnGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    pub prune: Option<Prune>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl AdnGraph {
    /// `{nodes, edges: [{src, dst, weight}]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Strongest-first order: |weight| descending, then source and target label.
pub fn edge_order(a: &Edge, b: &Edge) -> Ordering {
    b.weight
        .abs()
        .total_cmp(&a.weight.abs())
        .then_with(|| a.src.cmp(&b.src))
        .then_with(|| a.dst.cmp(&b.dst))
}

/// All off-diagonal edges of `d` among `nodes`, strongest first.
pub(crate) fn ranked_edges(d: &DependencyMatrix, nodes: &[usize]) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(nodes.len() * nodes.len().saturating_sub(1));
    for &i in nodes {
        for &j in nodes {
            if i != j {
                edges.push(Edge {
                    src: d.labels[j].clone(),
                    dst: d.labels[i].clone(),
                    weight: d.values[i][j],
                });
            }
        }
    }
    edges.sort_by(edge_order);
    edges
}

/// Pruned dependency network.
///
/// Excluded attributes (glob patterns) are removed before ranking.
pub fn build_adn(d: &DependencyMatrix, prune: Prune, exclusions: &[String]) -> Result<AdnGraph> {
    if let Prune::Threshold(t) = prune {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Usage(format!(
                "threshold must be a non-negative number, got {t}"
            )));
        }
    }
    let excluded = Exclusions::new(exclusions)?;
    let nodes: Vec<usize> = (0..d.len()).filter(|&i| !excluded.matches(&d.labels[i])).collect();
    let mut edges = ranked_edges(d, &nodes);
    let mut warnings = Vec::new();
    match prune {
        Prune::TopN(n) => {
            if n > edges.len() {
                warnings.push(format!(
                    "top_n = {n} exceeds the {} available edges; keeping all",
                    edges.len()
                ));
            }
            edges.truncate(n);
        }
        Prune::Threshold(t) => edges.retain(|e| e.weight.abs() >= t),
    }
    Ok(AdnGraph {
        nodes: nodes.iter().map(|&i| d.labels[i].clone()).collect(),
        edges,
        prune: Some(prune),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netstats::dependency::dependency_values;

    fn fixture() -> DependencyMatrix {
        let c = vec![vec![1.0, 0.6, 0.5], vec![0.6, 1.0, 0.3], vec![0.5, 0.3, 1.0]];
        let (values, _) = dependency_values(&c);
        DependencyMatrix {
            labels: vec!["a".into(), "b".into(), "c".into()],
            values,
            degenerate_terms: 0,
            dropped: vec![],
        }
    }

    #[test]
    fn top_two_by_hand() {
        let d = fixture();
        // Off-diagonal entries ranked independently of the implementation.
        let mut all = vec![];
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    all.push((d.values[i][j].abs(), j, i));
                }
            }
        }
        all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let g = build_adn(&d, Prune::TopN(2), &[]).unwrap();
        assert_eq!(g.edges.len(), 2);
        for (e, (_, j, i)) in g.edges.iter().zip(&all) {
            assert_eq!(
                (e.src.as_str(), e.dst.as_str()),
                (d.labels[*j].as_str(), d.labels[*i].as_str())
            );
            assert_eq!(e.weight, d.values[*i][*j]);
        }
    }

    #[test]
    fn zero_and_oversized_top_n() {
        let d = fixture();
        assert!(build_adn(&d, Prune::TopN(0), &[]).unwrap().edges.is_empty());
        let g = build_adn(&d, Prune::TopN(50), &[]).unwrap();
        assert_eq!(g.edges.len(), 6);
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn exclusions_shrink_nodes() {
        let g = build_adn(&fixture(), Prune::TopN(10), &["c".into()]).unwrap();
        assert_eq!(g.nodes, ["a", "b"]);
        assert!(g.edges.iter().all(|e| e.src != "c" && e.dst != "c"));
    }

    #[test]
    fn threshold() {
        let d = fixture();
        let g = build_adn(&d, Prune::Threshold(0.03), &[]).unwrap();
        assert!(g.edges.iter().all(|e| e.weight.abs() >= 0.03));
        assert!(build_adn(&d, Prune::Threshold(-1.0), &[]).is_err());
    }

    #[test]
    fn ties_break_by_labels() {
        let d = DependencyMatrix {
            labels: vec!["z".into(), "m".into(), "a".into()],
            values: vec![vec![0.0, 0.1, -0.1], vec![0.1, 0.0, 0.1], vec![0.1, 0.1, 0.0]],
            degenerate_terms: 0,
            dropped: vec![],
        };
        let g = build_adn(&d, Prune::TopN(6), &[]).unwrap();
        let pairs: Vec<_> = g.edges.iter().map(|e| format!("{}>{}", e.src, e.dst)).collect();
        assert_eq!(pairs, ["a>m", "a>z", "m>a", "m>z", "z>a", "z>m"]);
        let mut shuffled = d.clone();
        shuffled.labels.reverse();
        shuffled.values.reverse();
        for row in &mut shuffled.values {
            row.reverse();
        }
        assert_eq!(build_adn(&shuffled, Prune::TopN(6), &[]).unwrap().edges, g.edges);
    }

    #[test]
    fn json_shape() {
        let g = build_adn(&fixture(), Prune::TopN(1), &[]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 3);
        assert!(v["edges"][0]["src"].is_string() && v["edges"][0]["weight"].is_number());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn edge_list_ignores_column_order(
            (values, perm) in (3usize..7).prop_flat_map(|n| (
                proptest::collection::vec(proptest::collection::vec(-3i32..=3, n), n),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            )),
            top in 1usize..20,
        ) {
            let n = values.len();
            // Coarse weights force plenty of ties.
            let values: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|&v| v as f64 / 10.0).collect()).collect();
            let labels: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
            let d = DependencyMatrix { labels: labels.clone(), values: values.clone(), degenerate_terms: 0, dropped: vec![] };
            let permuted = DependencyMatrix {
                labels: perm.iter().map(|&p| labels[p].clone()).collect(),
                values: perm.iter().map(|&i| perm.iter().map(|&j| values[i][j]).collect()).collect(),
                degenerate_terms: 0,
                dropped: vec![],
            };
            let a = build_adn(&d, Prune::TopN(top), &[]).unwrap();
            let b = build_adn(&permuted, Prune::TopN(top), &[]).unwrap();
            prop_assert_eq!(&a.edges, &b.edges);
            prop_assert_eq!(a.edges, build_adn(&d, Prune::TopN(top), &[]).unwrap().edges);
        }
    }
}
