//! CSV, SVG and DOT views of the analysis results.
//!
//! Every chart carries the CSV of exactly the numbers it draws. Written under
//! a run's report directory the files land in `csv/`, `svg/` and `dot/`.

mod charts;
mod network;
mod svg;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use charts::{comparison_chart, correlation_bars, score_distribution, BINS};
pub use network::{render_network, to_dot};

/// One output file, addressed relative to the report directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    pub name: String,
    pub artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
}

impl Chart {
    pub(crate) fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn add(&mut self, kind: &str, suffix: &str, content: String) {
        self.artifacts.push(Artifact {
            path: format!("{kind}/{}{suffix}.{kind}", self.name),
            content,
        });
    }

    /// Content of the artifact whose path ends with `suffix`.
    pub fn get(&self, suffix: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.path.ends_with(suffix))
            .map(|a| a.content.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, &a.content).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests;
