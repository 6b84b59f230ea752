use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::pearson;
use super::dependency::{complete_submatrix, dependency_values};
use super::table::NumericTable;
use crate::error::{Error, Result};

/// Skipped-sample fraction above which a bootstrap run fails.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

/// Samples computed together before being folded in index order.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub samples: usize,
    pub top_n: Vec<usize>,
    pub seed: u64,
    /// When false every sample is the original table.
    pub resample: bool,
    pub min_samples: usize,
    pub parallel: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            top_n: vec![10, 50, 100, 1000],
            seed: 0,
            resample: true,
            min_samples: super::DEFAULT_MIN_SAMPLES,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub top_n: usize,
    /// `top_n` capped at the number of edges.
    pub effective_n: usize,
    pub consistency: f64,
    pub strength: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
    pub labels: Vec<String>,
    /// Columns removed beforehand because their correlations were incomplete.
    pub dropped: Vec<String>,
    pub rows: Vec<BootstrapRow>,
}

impl BootstrapReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("top_n,effective_n,consistency,strength,std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.top_n, r.effective_n, r.consistency, r.strength, r.std
            ));
        }
        out
    }

    /// Two-decimal table in the usual consistency / strength / STD layout.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "B = {} ({} skipped), seed {}\n{:>6}  {:>11}  {:>8}  {:>6}\n",
            self.samples, self.skipped, self.seed, "n", "consistency", "strength", "STD"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>6}  {:>11.2}  {:>8.2}  {:>6.3}\n",
                r.top_n, r.consistency, r.strength, r.std
            ));
        }
        out
    }
}

/// Row indices of sample `index`: `rows` draws with replacement from a
/// ChaCha8 generator seeded with `seed` on stream `index`.
pub fn sample_rows(seed: u64, index: usize, rows: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..rows).map(|_| rng.random_range(0..rows)).collect()
}

/// Dependency values of one resample; `None` if any correlation is missing.
fn sample_dependency(table: &NumericTable, cfg: &BootstrapConfig, index: usize) -> Option<Vec<Vec<f64>>> {
    let sample = if cfg.resample {
        table.take_rows(&sample_rows(cfg.seed, index, table.n_rows()))
    } else {
        table.clone()
    };
    let c = pearson(&sample, cfg.min_samples).ok()?;
    let dense: Option<Vec<Vec<f64>>> = c.values.into_iter().map(|r| r.into_iter().collect()).collect();
    Some(dependency_values(&dense?).0)
}

/// Visit every sample's dependency values in index order.
fn for_each_sample(table: &NumericTable, cfg: &BootstrapConfig, mut visit: impl FnMut(Option<&Vec<Vec<f64>>>)) {
    for start in (0..cfg.samples).step_by(CHUNK) {
        let end = (start + CHUNK).min(cfg.samples);
        let chunk: Vec<_> = if cfg.parallel {
            (start..end)
                .into_par_iter()
                .map(|s| sample_dependency(table, cfg, s))
                .collect()
        } else {
            (start..end).map(|s| sample_dependency(table, cfg, s)).collect()
        };
        for d in &chunk {
            visit(d.as_ref());
        }
    }
}

/// Off-diagonal `(i, j)` pairs, strongest |d[i][j]| first; ties by the labels
/// of source `j` then target `i`.
pub(crate) fn rank_pairs(d: &[Vec<f64>], labels: &[String]) -> Vec<(usize, usize)> {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    let mut label_rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        label_rank[i] = r;
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|&(i1, j1), &(i2, j2)| {
        d[i2][j2]
            .abs()
            .total_cmp(&d[i1][j1].abs())
            .then(label_rank[j1].cmp(&label_rank[j2]))
            .then(label_rank[i1].cmp(&label_rank[i2]))
    });
    pairs
}

/// Edge stability of the dependency network under row resampling.
///
/// The reference edges for each `n` are the top `n` of the element-wise mean
/// of all usable sample matrices. Consistency is the mean share of reference
/// edges found in a sample's own top `n`; strength is the mean |weight| of the
/// reference edges across samples; STD is the per-edge population standard
/// deviation of |weight| across samples, averaged over the reference edges.
/// Samples whose correlations are incomplete are skipped.
pub fn bootstrap(table: &NumericTable, cfg: &BootstrapConfig) -> Result<BootstrapReport> {
    if cfg.samples == 0 {
        return Err(Error::Usage("bootstrap needs at least one sample".into()));
    }
    if table.n_rows() < 3 {
        return Err(Error::data(format!(
            "bootstrap needs at least 3 rows, have {}",
            table.n_rows()
        )));
    }
    let c = pearson(table, cfg.min_samples)?;
    let (keep, dropped) = complete_submatrix(&c);
    if keep.len() < 3 {
        return Err(Error::data("fewer than 3 columns with complete correlations"));
    }
    let labels: Vec<String> = keep.iter().map(|&i| table.labels[i].clone()).collect();
    let table = table.select(&labels)?;
    let n = labels.len();

    // Pass 1: running mean of every entry.
    let mut mean = vec![vec![0.0; n]; n];
    let mut used = 0usize;
    for_each_sample(&table, cfg, |d| {
        if let Some(d) = d {
            used += 1;
            let k = used as f64;
            for (mrow, drow) in mean.iter_mut().zip(d) {
                for (m, &x) in mrow.iter_mut().zip(drow) {
                    *m += (x - *m) / k;
                }
            }
        }
    });
    let skipped = cfg.samples - used;
    if used == 0 || skipped as f64 > MAX_SKIPPED_FRACTION * cfg.samples as f64 {
        return Err(Error::Degenerate(format!(
            "{skipped} of {} bootstrap samples had degenerate correlations",
            cfg.samples
        )));
    }

    let reference = rank_pairs(&mean, &labels);
    let settings: Vec<usize> = cfg.top_n.iter().map(|&t| t.min(reference.len())).collect();
    let max_n = settings.iter().copied().max().unwrap_or(0);

    // Rank of each pair in the reference ordering.
    let mut ref_rank = vec![vec![usize::MAX; n]; n];
    for (r, &(i, j)) in reference.iter().enumerate() {
        ref_rank[i][j] = r;
    }

    // Pass 2: overlaps and reference-edge weights.
    let mut hits = vec![0usize; settings.len()];
    let mut count = 0usize;
    let mut sums = vec![0.0; settings.len()];
    let mut edge_mean = vec![0.0; max_n];
    let mut edge_m2 = vec![0.0; max_n];
    for_each_sample(&table, cfg, |d| {
        let Some(d) = d else { return };
        count += 1;
        let ranked = rank_pairs(d, &labels);
        for (s, &top) in settings.iter().enumerate() {
            hits[s] += ranked[..top].iter().filter(|&&(i, j)| ref_rank[i][j] < top).count();
            for &(i, j) in &reference[..top] {
                sums[s] += d[i][j].abs();
            }
        }
        let k = count as f64;
        for (e, &(i, j)) in reference[..max_n].iter().enumerate() {
            let x = d[i][j].abs();
            let delta = x - edge_mean[e];
            edge_mean[e] += delta / k;
            edge_m2[e] += delta * (x - edge_mean[e]);
        }
    });

    let rows = cfg
        .top_n
        .iter()
        .zip(&settings)
        .enumerate()
        .map(|(s, (&top_n, &eff))| {
            let (consistency, strength, std) = if eff == 0 {
                (1.0, 0.0, 0.0)
            } else {
                let std_sum: f64 = edge_m2[..eff].iter().map(|m2| (m2 / count as f64).sqrt()).sum();
                (
                    hits[s] as f64 / (count as f64 * eff as f64),
                    sums[s] / (count as f64 * eff as f64),
                    std_sum / eff as f64,
                )
            };
            BootstrapRow {
                top_n,
                effective_n: eff,
                consistency,
                strength,
                std,
            }
        })
        .collect();

    Ok(BootstrapReport {
        samples: cfg.samples,
        skipped,
        seed: cfg.seed,
        labels,
        dropped,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: usize, seed: u64) -> NumericTable {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = 0.7 * a + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                let c: f64 = 0.5 * b + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                let e: f64 = StandardNormal.sample(&mut rng);
                vec![a, b, c, e]
            })
            .collect();
        NumericTable::from_dense(vec!["a".into(), "b".into(), "c".into(), "e".into()], &data).unwrap()
    }

    fn cfg(samples: usize) -> BootstrapConfig {
        BootstrapConfig {
            samples,
            top_n: vec![1, 3, 12, 40],
            seed: 7,
            resample: true,
            min_samples: 10,
            parallel: true,
        }
    }

    #[test]
    fn disabled_resampling_is_perfectly_stable() {
        let r = bootstrap(
            &table(30, 1),
            &BootstrapConfig {
                resample: false,
                ..cfg(25)
            },
        )
        .unwrap();
        for row in &r.rows {
            assert_eq!(row.consistency, 1.0);
            assert_eq!(row.std, 0.0);
        }
        assert_eq!(r.rows[3].effective_n, 12);
    }

    #[test]
    fn parallel_matches_serial() {
        let t = table(40, 2);
        let a = bootstrap(&t, &cfg(150)).unwrap();
        let b = bootstrap(
            &t,
            &BootstrapConfig {
                parallel: false,
                ..cfg(150)
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds() {
        let r = bootstrap(&table(40, 3), &cfg(60)).unwrap();
        for row in &r.rows {
            assert!((0.0..=1.0).contains(&row.consistency));
            assert!(row.std >= 0.0 && row.strength >= 0.0);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        assert_eq!(sample_rows(7, 3, 20), sample_rows(7, 3, 20));
        assert_ne!(sample_rows(7, 3, 20), sample_rows(7, 4, 20));
        assert!(sample_rows(7, 0, 20).iter().all(|&i| i < 20));
    }

    #[test]
    fn degenerate_samples_fail() {
        // A column that is constant except for a single row collapses in most resamples.
        let mut t = table(12, 4);
        for (r, row) in t.rows.iter_mut().enumerate() {
            row[3] = Some(if r == 0 { 1.0 } else { 0.0 });
        }
        let err = bootstrap(
            &t,
            &BootstrapConfig {
                min_samples: 3,
                ..cfg(50)
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn input_errors() {
        assert!(bootstrap(&table(2, 5), &cfg(5)).is_err());
        assert!(bootstrap(&table(20, 5), &cfg(0)).is_err());
    }
}
