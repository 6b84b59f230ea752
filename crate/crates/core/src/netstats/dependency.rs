use serde::{Deserialize, Serialize};

use super::correlation::{matrix_csv, partial, CorrelationMatrix};
use crate::error::{Error, Result};

/// Average influence of each attribute on the correlations of another.
///
/// `values[i][j]` is the influence of `j` on `i`; the matrix is generally
/// asymmetric and its diagonal is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Partial-correlation terms that hit a vanishing denominator and were
    /// counted as zero.
    pub degenerate_terms: usize,
    /// Columns removed because their correlations were incomplete.
    pub dropped: Vec<String>,
}

impl DependencyMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.labels, |i, j| Some(self.values[i][j]))
    }
}

/// Remove columns until every remaining entry is present, dropping the column
/// with the most missing entries first (the later column on ties).
///
/// Returns the kept column indices and the dropped labels in drop order.
pub fn complete_submatrix(c: &CorrelationMatrix) -> (Vec<usize>, Vec<String>) {
    let mut keep: Vec<usize> = (0..c.len()).collect();
    let mut dropped = Vec::new();
    loop {
        let missing: Vec<usize> = keep
            .iter()
            .map(|&i| keep.iter().filter(|&&j| c.values[i][j].is_none()).count())
            .collect();
        let Some((pos, &worst)) = missing.iter().enumerate().rev().max_by_key(|&(_, m)| *m) else {
            break;
        };
        if worst == 0 {
            break;
        }
        dropped.push(c.labels[keep[pos]].clone());
        keep.remove(pos);
    }
    (keep, dropped)
}

/// Dense dependency values for a complete correlation matrix.
///
/// For each `j` and `i ≠ j` the terms `C_ik − PC^j_ik` are summed over
/// `k = 0, 1, …` with `k ∉ {i, j}` and the sum is divided by `N − 1`. The
/// omitted `k = i` term is zero. Degenerate terms add nothing and are
/// counted in the second return value.
pub fn dependency_values(c: &[Vec<f64>]) -> (Vec<Vec<f64>>, usize) {
    let n = c.len();
    let mut d = vec![vec![0.0; n]; n];
    let mut degenerate = 0;
    let denom = (n - 1) as f64;
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let mut sum = 0.0;
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                match partial(c[i][k], c[i][j], c[k][j]) {
                    Some(pc) => sum += c[i][k] - pc,
                    None => degenerate += 1,
                }
            }
            d[i][j] = sum / denom;
        }
    }
    (d, degenerate)
}

/// Dependency matrix over the columns of `c` whose correlations are complete.
pub fn dependency_matrix(c: &CorrelationMatrix) -> Result<DependencyMatrix> {
    let (keep, dropped) = complete_submatrix(c);
    if keep.len() < 3 {
        return Err(Error::data(format!(
            "dependency matrix needs at least 3 columns with complete correlations, have {}",
            keep.len()
        )));
    }
    let dense: Vec<Vec<f64>> = keep
        .iter()
        .map(|&i| {
            keep.iter()
                .map(|&j| c.values[i][j].expect("complete submatrix"))
                .collect()
        })
        .collect();
    let (values, degenerate_terms) = dependency_values(&dense);
    Ok(DependencyMatrix {
        labels: keep.iter().map(|&i| c.labels[i].clone()).collect(),
        values,
        degenerate_terms,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn three() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.6, 0.5], vec![0.6, 1.0, 0.3], vec![0.5, 0.3, 1.0]]
    }

    /// Sum over every `k ≠ j`, including `k = i`.
    fn literal(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = c.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut s = 0.0;
                for k in (0..n).filter(|&k| k != j) {
                    s += c[i][k] - partial(c[i][k], c[i][j], c[k][j]).unwrap_or(c[i][k]);
                }
                d[i][j] = s / (n - 1) as f64;
            }
        }
        d
    }

    /// Random correlation matrix from a Gram matrix of unit vectors.
    fn psd(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let unit: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                v.iter().map(|x| x / norm).collect()
            })
            .collect();
        unit.iter()
            .map(|a| {
                unit.iter()
                    .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0))
                    .collect()
            })
            .collect()
    }

    fn psd_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (3usize..9).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, n + 2), n).prop_map(|v| psd(&v))
        })
    }

    #[test]
    fn hand_anchor() {
        let (d, deg) = dependency_values(&three());
        assert_eq!(deg, 0);
        let pc = 0.32 / (0.8 * 0.91f64.sqrt());
        assert!((d[0][1] - (0.5 - pc) / 2.0).abs() < 1e-15);
        assert!((d[0][1] - 0.0403).abs() < 1e-4);
        assert_eq!(d[1][1], 0.0);
    }

    #[test]
    fn identity_gives_zero() {
        let c: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let (d, _) = dependency_values(&c);
        assert!(d.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn too_small() {
        let c = CorrelationMatrix::from_values(labels(2), vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(dependency_matrix(&c).is_err());
    }

    #[test]
    fn incomplete_columns_are_dropped() {
        let mut c = CorrelationMatrix::from_values(labels(4), {
            let mut v = three();
            for row in &mut v {
                row.push(0.1);
            }
            v.push(vec![0.1, 0.1, 0.1, 1.0]);
            v
        })
        .unwrap();
        c.values[3][0] = None;
        c.values[0][3] = None;
        c.values[3][1] = None;
        c.values[1][3] = None;
        let d = dependency_matrix(&c).unwrap();
        assert_eq!(d.dropped, ["x3"]);
        assert_eq!(d.labels, ["x0", "x1", "x2"]);
    }

    #[test]
    fn degenerate_terms_counted() {
        let c = vec![vec![1.0, 1.0, 0.2], vec![1.0, 1.0, 0.2], vec![0.2, 0.2, 1.0]];
        let (d, deg) = dependency_values(&c);
        assert!(deg > 0);
        assert!(d.iter().flatten().all(|v| v.is_finite()));
    }

    proptest! {
        #[test]
        fn matches_literal_sum(c in psd_strategy()) {
            let (d, _) = dependency_values(&c);
            let lit = literal(&c);
            for (a, b) in d.iter().flatten().zip(lit.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn partial_bounded_on_psd(c in psd_strategy()) {
            let n = c.len();
            for i in 0..n { for k in 0..n { for j in 0..n {
                if i == j || k == j { continue; }
                if let Some(pc) = partial(c[i][k], c[i][j], c[k][j]) {
                    prop_assert!(pc.abs() <= 1.0 + 1e-9, "pc = {}", pc);
                }
            }}}
        }

        #[test]
        fn entries_bounded(c in psd_strategy()) {
            let (d, _) = dependency_values(&c);
            prop_assert!(d.iter().flatten().all(|v| v.abs() <= 2.0));
        }

        #[test]
        fn uncorrelated_conditioner_has_no_influence(c in psd_strategy(), pick in 0usize..64) {
            let n = c.len();
            let j = pick % n;
            let mut c = c;
            for (i, row) in c.iter_mut().enumerate() {
                if i != j {
                    row[j] = 0.0;
                }
            }
            for (i, v) in c[j].iter_mut().enumerate() {
                if i != j {
                    *v = 0.0;
                }
            }
            let (d, _) = dependency_values(&c);
            for row in &d {
                prop_assert_eq!(row[j], 0.0);
            }
        }

        #[test]
        fn label_equivariance(c in psd_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = c.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&a| perm.iter().map(|&b| c[a][b]).collect()).collect();
            let (d, _) = dependency_values(&c);
            let (dp, _) = dependency_values(&permuted);
            for a in 0..n {
                for b in 0..n {
                    prop_assert!((dp[a][b] - d[perm[a]][perm[b]]).abs() < 1e-12);
                }
            }
        }
    }
}
