use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::{Cell, DataMatrix};

/// Columns whose categories are mapped onto {0, 1}.
pub const PARTY_COLUMNS: [&str; 2] = ["speaker_party", "debate_elected_party"];

/// Party encoding: Democratic = 1, Republican = 0, anything else missing.
///
/// The sign of every party correlation depends on this choice.
pub fn encode_party(category: &str) -> Option<f64> {
    match category {
        "Democratic" => Some(1.0),
        "Republican" => Some(0.0),
        _ => None,
    }
}

/// Numeric view of a [`DataMatrix`]: row-major, `None` for missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTable {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl NumericTable {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != labels.len()) {
            return Err(Error::data(format!(
                "row {bad} has {} values for {} columns",
                rows[bad].len(),
                labels.len()
            )));
        }
        Ok(Self { labels, rows })
    }

    /// Table without missing values.
    pub fn from_dense(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            labels,
            rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect(),
        )
    }

    /// Encode a data matrix. Text columns are dropped and their names returned.
    pub fn from_matrix(matrix: &DataMatrix) -> (Self, Vec<String>) {
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for (j, col) in matrix.columns.iter().enumerate() {
            let party = PARTY_COLUMNS.contains(&col.name.as_str());
            let numeric = col.value_kind.is_numeric()
                && matrix
                    .cells
                    .iter()
                    .all(|r| matches!(r[j], Cell::Number(_) | Cell::Missing));
            if party || numeric {
                keep.push((j, party));
            } else {
                dropped.push(col.name.clone());
            }
        }
        let labels = keep.iter().map(|&(j, _)| matrix.columns[j].name.clone()).collect();
        let rows = matrix
            .cells
            .iter()
            .map(|row| {
                keep.iter()
                    .map(|&(j, party)| match &row[j] {
                        Cell::Number(v) if v.is_finite() => Some(*v),
                        Cell::Category(c) if party => encode_party(c),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        (Self { labels, rows }, dropped)
    }

    /// Parse a CSV with a header row. A leading `unit` column is ignored;
    /// empty fields are missing.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::data("empty CSV"))?;
        let mut labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let skip_first = labels.first().is_some_and(|l| l == "unit");
        if skip_first {
            labels.remove(0);
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut fields: Vec<&str> = line.split(',').collect();
            if skip_first && !fields.is_empty() {
                fields.remove(0);
            }
            let row = fields
                .iter()
                .map(|f| {
                    let f = f.trim();
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::data(format!("data row {}: `{f}` is not a number", n + 1)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(labels, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Keep the given columns, in the given order.
    pub fn select(&self, labels: &[String]) -> Result<Self> {
        let idx = labels
            .iter()
            .map(|l| {
                self.column_index(l)
                    .ok_or_else(|| Error::data(format!("no column `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels: labels.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
        })
    }

    /// Drop columns whose label matches any glob pattern.
    pub fn exclude(&self, patterns: &[String]) -> Result<Self> {
        let matcher = Exclusions::new(patterns)?;
        let keep: Vec<String> = self.labels.iter().filter(|l| !matcher.matches(l)).cloned().collect();
        self.select(&keep)
    }

    /// Rows picked by index, duplicates allowed.
    pub fn take_rows(&self, idx: &[usize]) -> Self {
        Self {
            labels: self.labels.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Glob patterns over attribute labels.
pub struct Exclusions(Vec<glob::Pattern>);

impl Exclusions {
    pub fn new(patterns: &[String]) -> Result<Self> {
        patterns
            .iter()
            .map(|p| glob::Pattern::new(p).map_err(|e| Error::Usage(format!("bad exclusion pattern `{p}`: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn matches(&self, label: &str) -> bool {
        self.0.iter().any(|p| p.matches(label))
    }
}
