//! Input generators shared by the benchmarks.

use adnscope::corpus::{Debate, Party, Turn};
use adnscope::netstats::NumericTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random correlation matrix of size `n` (normalised Gram matrix).
pub fn random_correlation(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = n + 5;
    let a: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let dot = |i: usize, j: usize| -> f64 { a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum() };
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        dot(i, j) / (dot(i, i) * dot(j, j)).sqrt()
                    }
                })
                .collect()
        })
        .collect()
}

/// Table of `rows` observations of `cols` loosely correlated columns.
pub fn random_table(rows: usize, cols: usize, seed: u64) -> NumericTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            let shared: f64 = StandardNormal.sample(&mut rng);
            (0..cols)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    0.5 * shared + e
                })
                .collect()
        })
        .collect();
    NumericTable::from_dense((0..cols).map(|c| format!("a{c}")).collect(), &data).expect("rectangular table")
}

/// Debate of `turns` turns of 20 to 300 words.
pub fn synthetic_debate(turns: usize, seed: u64) -> Debate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Debate {
        id: "bench".into(),
        year: 1960,
        turns: (0..turns)
            .map(|index| Turn {
                speaker: ["a", "b", "moderator"][index % 3].into(),
                text: vec!["word"; rng.random_range(20..300)].join(" "),
                index,
            })
            .collect(),
        total_electoral_votes: 0,
        total_popular_votes: 0,
        elected_party: Party::Other,
    }
}
