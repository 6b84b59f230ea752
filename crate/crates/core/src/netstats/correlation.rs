use serde::{Deserialize, Serialize};

use super::table::NumericTable;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_SAMPLES: usize = 10;

/// Threshold below which `1 − C²` counts as zero in a partial correlation.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Pairwise-complete Pearson correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// `None` where a pair had too few complete rows or zero variance.
    pub values: Vec<Vec<Option<f64>>>,
    /// Complete rows behind each entry.
    pub counts: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    /// Complete matrix from raw values, e.g. a generated correlation matrix.
    pub fn from_values(labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(Error::data(format!("correlation matrix must be {n}×{n}")));
        }
        Ok(Self {
            labels,
            values: values.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
            counts: vec![vec![0; n]; n],
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Label-indexed CSV; missing entries are empty.
    pub fn to_csv(&self) -> String {
        matrix_csv(&self.labels, |i, j| self.values[i][j])
    }
}

pub(crate) fn matrix_csv(labels: &[String], value: impl Fn(usize, usize) -> Option<f64>) -> String {
    use crate::survey::csv_field;
    let mut out = String::from("attribute");
    for l in labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&csv_field(l));
        for j in 0..labels.len() {
            out.push(',');
            if let Some(v) = value(i, j) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Correlation of two columns over the rows where both are present.
///
/// Means are taken first, then centred sums; the result is clamped to [−1, 1].
/// Returns the number of complete rows with the coefficient, which is `None`
/// when either column is constant on those rows or fewer than `min_samples`
/// remain.
pub fn pearson_pair(x: &[Option<f64>], y: &[Option<f64>], min_samples: usize) -> (usize, Option<f64>) {
    let pairs: Vec<(f64, f64)> = x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    let n = pairs.len();
    if n < min_samples.max(2) {
        return (n, None);
    }
    if pairs.iter().all(|p| p.0 == pairs[0].0) || pairs.iter().all(|p| p.1 == pairs[0].1) {
        return (n, None);
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return (n, None);
    }
    (n, Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Pearson correlation for every column pair of `table`.
pub fn pearson(table: &NumericTable, min_samples: usize) -> Result<CorrelationMatrix> {
    let n = table.n_cols();
    if n < 2 {
        return Err(Error::data(format!("need at least 2 numeric columns, found {n}")));
    }
    let columns: Vec<Vec<Option<f64>>> = (0..n).map(|j| table.column(j)).collect();
    let mut values = vec![vec![None; n]; n];
    let mut counts = vec![vec![0; n]; n];
    for i in 0..n {
        let (count, diag) = pearson_pair(&columns[i], &columns[i], min_samples);
        counts[i][i] = count;
        values[i][i] = diag.map(|_| 1.0);
        for j in i + 1..n {
            let (count, r) = pearson_pair(&columns[i], &columns[j], min_samples);
            counts[i][j] = count;
            counts[j][i] = count;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: table.labels.clone(),
        values,
        counts,
    })
}

/// Partial correlation of `c_ik` given the conditioner's correlations `c_ij`
/// and `c_kj`. `None` when either `1 − c²` falls below [`DEGENERACY_EPS`].
pub fn partial(c_ik: f64, c_ij: f64, c_kj: f64) -> Option<f64> {
    let a = 1.0 - c_ij * c_ij;
    let b = 1.0 - c_kj * c_kj;
    if a < DEGENERACY_EPS || b < DEGENERACY_EPS {
        return None;
    }
    Some((c_ik - c_ij * c_kj) / (a.sqrt() * b.sqrt()))
}

/// Correlation of `i` and `k` with the linear effect of `j` removed.
pub fn partial_correlation(c: &CorrelationMatrix, i: usize, k: usize, j: usize) -> Result<f64> {
    let get = |a: usize, b: usize| {
        c.get(a, b).ok_or_else(|| {
            Error::data(format!(
                "correlation of `{}` and `{}` is missing",
                c.labels[a], c.labels[b]
            ))
        })
    };
    let (c_ik, c_ij, c_kj) = (get(i, k)?, get(i, j)?, get(k, j)?);
    partial(c_ik, c_ij, c_kj).ok_or_else(|| {
        Error::Degenerate(format!(
            "`{}` is perfectly correlated with `{}` or `{}`",
            c.labels[j], c.labels[i], c.labels[k]
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|&x| Some(x)).collect()
    }

    fn brute_force(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn self_and_negated() {
        let x = [0.1, 0.4, 0.35, 0.8, 0.5];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson_pair(&col(&x), &col(&x), 2).1, Some(1.0));
        assert!((pearson_pair(&col(&x), &col(&neg), 2).1.unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn five_rows_match_sum_formula() {
        let x = [0.2, 0.9, 0.4, 0.7, 0.1];
        let y = [0.3, 0.6, 0.65, 0.9, 0.2];
        let r = pearson_pair(&col(&x), &col(&y), 5).1.unwrap();
        assert!((r - brute_force(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn insufficient_or_constant_is_missing() {
        let x = col(&[1.0, 2.0, 3.0]);
        assert_eq!(pearson_pair(&x, &x, 10), (3, None));
        let c = col(&[0.3; 12]);
        let y = col(&(0..12).map(f64::from).collect::<Vec<_>>());
        assert_eq!(pearson_pair(&c, &y, 10).1, None);
        let t = NumericTable::new(
            vec!["c".into(), "y".into()],
            c.iter().zip(&y).map(|(a, b)| vec![*a, *b]).collect(),
        )
        .unwrap();
        let m = pearson(&t, 10).unwrap();
        assert_eq!(m.values[0][0], None);
        assert_eq!(m.values[1][1], Some(1.0));
    }

    #[test]
    fn pairwise_deletion() {
        let x = vec![Some(1.0), Some(2.0), None, Some(4.0), Some(5.0)];
        let y = vec![Some(2.0), None, Some(9.0), Some(8.0), Some(10.0)];
        let (n, r) = pearson_pair(&x, &y, 3);
        assert_eq!(n, 3);
        assert!((r.unwrap() - brute_force(&[1.0, 4.0, 5.0], &[2.0, 8.0, 10.0])).abs() < 1e-12);
    }

    #[test]
    fn too_few_columns() {
        let t = NumericTable::from_dense(vec!["a".into()], &[vec![1.0]]).unwrap();
        assert!(pearson(&t, 1).is_err());
    }

    #[test]
    fn partial_anchors() {
        assert_eq!(partial(0.42, 0.0, 0.0), Some(0.42));
        assert_eq!(partial(0.15, 0.5, 0.3), Some(0.0));
        let v = partial(0.6, 0.5, 0.3).unwrap();
        assert!((v - 0.45 / (0.75f64.sqrt() * 0.91f64.sqrt())).abs() < 1e-15);
        assert!((v - 0.5447).abs() < 1e-4);
        assert_eq!(partial(0.3, 1.0, 0.2), None);
    }

    #[test]
    fn degenerate_is_reported() {
        let c = CorrelationMatrix::from_values(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![1.0, 0.2, 1.0], vec![0.2, 1.0, 0.2], vec![1.0, 0.2, 1.0]],
        )
        .unwrap();
        assert!(matches!(partial_correlation(&c, 0, 1, 2), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn partial_is_symmetric(c_ik in -1.0f64..1.0, c_ij in -0.99f64..0.99, c_kj in -0.99f64..0.99) {
            prop_assert_eq!(partial(c_ik, c_ij, c_kj), partial(c_ik, c_kj, c_ij));
        }

        #[test]
        fn correlation_is_bounded(rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
            let x: Vec<_> = rows.iter().map(|r| Some(r.0)).collect();
            let y: Vec<_> = rows.iter().map(|r| Some(r.1)).collect();
            if let (_, Some(r)) = pearson_pair(&x, &y, 2) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
