use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::InfluenceTable;
use crate::error::{Error, Result};
use crate::netstats::{pearson_pair, CorrelationMatrix, DependencyMatrix};

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` for fewer
/// than two pairs or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra: Vec<Option<f64>> = average_ranks(a).into_iter().map(Some).collect();
    let rb: Vec<Option<f64>> = average_ranks(b).into_iter().map(Some).collect();
    pearson_pair(&ra, &rb, 2).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub given: String,
    /// `C[target][given]`.
    pub correlation: f64,
    /// `D[target][given]`, the network weight of `given → target`.
    pub dependency: f64,
    /// Mean perturbation influence.
    pub influence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelations {
    pub correlation_vs_dependency: Option<f64>,
    pub correlation_vs_influence: Option<f64>,
    pub dependency_vs_influence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub target: String,
    /// Ordered by |correlation| descending, then by name.
    pub rows: Vec<ComparisonRow>,
    pub rank_correlations: RankCorrelations,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        use crate::survey::csv_field;
        let mut out = String::from("given,target,correlation,dependency,influence\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.given),
                csv_field(&self.target),
                r.correlation,
                r.dependency,
                r.influence
            ));
        }
        out
    }
}

/// Line up correlation, dependency and perturbation influence for every given
/// attribute of `influences`.
pub fn compare_methods(
    c: &CorrelationMatrix,
    d: &DependencyMatrix,
    influences: &InfluenceTable,
    target: &str,
) -> Result<ComparisonTable> {
    if influences.target != target {
        return Err(Error::LabelMismatch(format!(
            "influence table is for `{}`, not `{target}`",
            influences.target
        )));
    }
    let givens: BTreeSet<&str> = influences.rows.iter().map(|r| r.given.as_str()).collect();
    if givens.is_empty() {
        return Err(Error::data("influence table has no rows"));
    }
    let c_labels: BTreeSet<&str> = c.labels.iter().map(String::as_str).collect();
    let d_labels: BTreeSet<&str> = d.labels.iter().map(String::as_str).collect();
    let mut problems = Vec::new();
    for (name, labels) in [("correlation matrix", &c_labels), ("dependency matrix", &d_labels)] {
        let missing: Vec<&&str> = givens
            .iter()
            .chain([&target])
            .filter(|g| !labels.contains(*g))
            .collect();
        if !missing.is_empty() {
            problems.push(format!("missing from {name}: {missing:?}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::LabelMismatch(problems.join("; ")));
    }

    let ci = |l: &str| c.labels.iter().position(|x| x == l).expect("checked");
    let di = |l: &str| d.index(l).expect("checked");
    let (tc, td) = (ci(target), di(target));
    let mut rows = Vec::new();
    for r in &influences.rows {
        let correlation = c.values[tc][ci(&r.given)]
            .ok_or_else(|| Error::data(format!("correlation of `{target}` and `{}` is missing", r.given)))?;
        rows.push(ComparisonRow {
            given: r.given.clone(),
            correlation,
            dependency: d.values[td][di(&r.given)],
            influence: r.mean,
        });
    }
    rows.sort_by(|a, b| {
        b.correlation
            .abs()
            .total_cmp(&a.correlation.abs())
            .then_with(|| a.given.cmp(&b.given))
    });

    let col = |f: fn(&ComparisonRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (cc, dd, ii) = (col(|r| r.correlation), col(|r| r.dependency), col(|r| r.influence));
    Ok(ComparisonTable {
        target: target.to_string(),
        rank_correlations: RankCorrelations {
            correlation_vs_dependency: spearman(&cc, &dd),
            correlation_vs_influence: spearman(&cc, &ii),
            dependency_vs_influence: spearman(&dd, &ii),
        },
        rows,
    })
}
