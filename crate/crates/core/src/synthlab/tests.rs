use super::*;
use crate::netstats::{build_adn, dependency_matrix, pearson, Edge, NumericTable, Prune};

fn model(vars: &[&str], edges: &[(&str, &str, f64)]) -> StructuralModel {
    StructuralModel {
        name: "t".into(),
        variables: vars.iter().map(|s| s.to_string()).collect(),
        edges: edges
            .iter()
            .map(|(p, c, k)| ModelEdge {
                parent: p.to_string(),
                child: c.to_string(),
                coefficient: *k,
            })
            .collect(),
        noise_std: vec![1.0; vars.len()],
        seed: 0,
    }
}

fn correlations(data: &SyntheticData) -> Vec<Vec<f64>> {
    let (t, _) = NumericTable::from_matrix(&data.matrix);
    pearson(&t, 10)
        .unwrap()
        .values
        .into_iter()
        .map(|r| r.into_iter().map(Option::unwrap).collect())
        .collect()
}

fn adn(data: &SyntheticData) -> AdnGraph {
    let (t, _) = NumericTable::from_matrix(&data.matrix);
    let d = dependency_matrix(&pearson(&t, 10).unwrap()).unwrap();
    build_adn(&d, Prune::TopN(usize::MAX), &[]).unwrap()
}

#[test]
fn bundled_suite_loads() {
    let suite = StructuralModel::bundled_suite();
    assert_eq!(suite.len(), 5);
    assert!(StructuralModel::bundled("chain5").is_some());
    for m in &suite {
        assert_eq!(StructuralModel::from_json(&m.to_json()).unwrap(), *m);
    }
}

#[test]
fn cycles_are_rejected() {
    let m = model(&["a", "b", "c"], &[("a", "b", 0.5), ("b", "c", 0.5), ("c", "a", 0.5)]);
    assert!(m.topological_order().is_err());
    assert!(generate(&m, 10, 0).is_err());
    let unknown = model(&["a"], &[("a", "q", 0.5)]);
    assert!(unknown.topological_order().is_err());
}

#[test]
fn minimal_shape_and_range() {
    let m = StructuralModel::bundled("diamond").unwrap();
    let d = generate(&m, 3, 1).unwrap();
    assert_eq!(d.matrix.rows(), 3);
    assert_eq!(d.matrix.columns.len(), 5);
    for v in d.matrix.cells.iter().flatten() {
        let x = v.as_number().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
    assert!(generate(&m, 2, 1).is_err());
}

#[test]
fn deterministic_per_seed() {
    let m = StructuralModel::bundled("fork").unwrap();
    assert_eq!(generate(&m, 50, 9).unwrap(), generate(&m, 50, 9).unwrap());
    assert_ne!(generate(&m, 50, 9).unwrap(), generate(&m, 50, 10).unwrap());
}

#[test]
fn independent_variables_are_uncorrelated() {
    let m = model(&["a", "b", "c"], &[]);
    let mut mean = [[0.0; 3]; 3];
    for seed in 0..50 {
        let c = correlations(&generate(&m, 10_000, seed).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                mean[i][j] += c[i][j] / 50.0;
            }
        }
    }
    for (i, row) in mean.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                assert!(v.abs() < 0.1, "C[{i}][{j}] = {v}");
            }
        }
    }
}

#[test]
fn chain_factorizes() {
    let m = model(&["x", "w", "y"], &[("x", "w", 0.9), ("w", "y", 0.9)]);
    let c = correlations(&generate(&m, 10_000, 11).unwrap());
    assert!((c[0][2] - c[0][1] * c[1][2]).abs() < 0.05);
    // Closed form for unit noise: corr(x, w) = 0.9 / sqrt(1.81).
    assert!((c[0][1] - 0.9 / 1.81f64.sqrt()).abs() < 0.05);
}

#[test]
fn display_scale_does_not_change_c_or_d() {
    let m = StructuralModel::bundled("mediator").unwrap();
    let data = generate(&m, 400, 3).unwrap();
    let (t, _) = NumericTable::from_matrix(&data.matrix);
    let c = pearson(&t, 10).unwrap();
    let d = dependency_matrix(&c).unwrap();
    let mut scaled = data.matrix.clone();
    scaled.scale_column("w", 7.5).unwrap();
    let (t2, _) = NumericTable::from_matrix(&scaled);
    let c2 = pearson(&t2, 10).unwrap();
    let d2 = dependency_matrix(&c2).unwrap();
    for (a, b) in c.values.iter().flatten().zip(c2.values.iter().flatten()) {
        assert!((a.unwrap() - b.unwrap()).abs() < 1e-10);
    }
    for (a, b) in d.values.iter().flatten().zip(d2.values.iter().flatten()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn total_effects_multiply_along_paths() {
    let m = StructuralModel::bundled("diamond").unwrap();
    let te = m.total_effects("e").unwrap();
    assert!((te["a"] - (0.8 * 0.7 + 0.8 * 0.7) * 0.8).abs() < 1e-12);
    assert!((te["d"] - 0.8).abs() < 1e-12);
    assert!(!te.contains_key("e"));
    let te_a = m.total_effects("a").unwrap();
    assert!(te_a.values().all(|&v| v == 0.0));
}

#[test]
fn perfect_and_empty_recovery() {
    let m = StructuralModel::bundled("chain5").unwrap();
    let truth = AdnGraph {
        nodes: m.variables.clone(),
        edges: m
            .edges
            .iter()
            .map(|e| Edge {
                src: e.parent.clone(),
                dst: e.child.clone(),
                weight: 0.5,
            })
            .collect(),
        prune: None,
        warnings: vec![],
    };
    assert_eq!(recovery_score(&truth, &m).unwrap(), 1.0);
    let empty = AdnGraph {
        edges: vec![],
        ..truth.clone()
    };
    assert_eq!(recovery_score(&empty, &m).unwrap(), 0.0);
    let wrong = AdnGraph {
        nodes: vec!["q".into()],
        ..truth
    };
    assert!(matches!(recovery_score(&wrong, &m), Err(Error::LabelMismatch(_))));
}

#[test]
fn chain_recovery_beats_baseline() {
    let m = StructuralModel::bundled("chain5").unwrap();
    let mut rec = 0.0;
    let mut base = 0.0;
    for seed in 0..10 {
        let g = adn(&generate(&m, 500, seed).unwrap());
        rec += recovery_score(&g, &m).unwrap();
        base += permutation_baseline(&g, &m, 200, seed).unwrap();
    }
    assert!(rec > base, "recovery {rec} vs baseline {base}");
}
