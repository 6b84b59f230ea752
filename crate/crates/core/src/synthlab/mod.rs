//! Linear-Gaussian structural models with known ground truth, used to check
//! that the dependency network recovers real structure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netstats::AdnGraph;
use crate::registry::{AttributeKind, AttributeSpec, MeasurementType, Registry, Scope, ValueKind};
use crate::survey::{Cell, Column, DataMatrix, MockProvider, Unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEdge {
    pub parent: String,
    pub child: String,
    pub coefficient: f64,
}

/// `child = Σ coefficient · parent + noise_std · ε` for every variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    pub name: String,
    pub variables: Vec<String>,
    pub edges: Vec<ModelEdge>,
    /// One standard deviation per variable, in `variables` order.
    pub noise_std: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Display map `v = (x − offset) / scale` applied to one generated column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub model: String,
    pub seed: u64,
    pub matrix: DataMatrix,
    /// Per-column display maps, in `matrix.columns` order.
    pub maps: Vec<AffineMap>,
}

const BUNDLED: [(&str, &str); 5] = [
    ("chain5", include_str!("../../data/synth/chain5.json")),
    ("fork", include_str!("../../data/synth/fork.json")),
    ("collider", include_str!("../../data/synth/collider.json")),
    ("diamond", include_str!("../../data/synth/diamond.json")),
    ("mediator", include_str!("../../data/synth/mediator.json")),
];

impl StructuralModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.topological_order()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// The bundled benchmark suite.
    pub fn bundled_suite() -> Vec<Self> {
        BUNDLED
            .iter()
            .map(|(_, text)| Self::from_json(text).expect("bundled model is valid"))
            .collect()
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("bundled model is valid"))
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == label)
            .ok_or_else(|| Error::data(format!("model `{}`: unknown variable `{label}`", self.name)))
    }

    /// Variables ordered parents-first; among ready variables the earlier
    /// declared one goes first.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.variables.len();
        let distinct: BTreeSet<&String> = self.variables.iter().collect();
        if distinct.len() != n {
            return Err(Error::data(format!("model `{}`: duplicate variable names", self.name)));
        }
        if self.noise_std.len() != n {
            return Err(Error::data(format!(
                "model `{}`: {} noise_std values for {n} variables",
                self.name,
                self.noise_std.len()
            )));
        }
        if let Some(s) = self.noise_std.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::data(format!("model `{}`: invalid noise_std {s}", self.name)));
        }
        let mut indegree = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for e in &self.edges {
            if !e.coefficient.is_finite() {
                return Err(Error::data(format!(
                    "model `{}`: coefficient of {} -> {} is not finite",
                    self.name, e.parent, e.child
                )));
            }
            let (p, c) = (self.index(&e.parent)?, self.index(&e.child)?);
            children[p].push(c);
            indegree[c] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::data(format!("model `{}` has a directed cycle", self.name)));
        }
        Ok(order)
    }

    /// Unordered parent/child pairs.
    pub fn skeleton(&self) -> BTreeSet<(String, String)> {
        self.edges.iter().map(|e| unordered(&e.parent, &e.child)).collect()
    }

    /// Total causal effect of every variable on `target` (sum over directed
    /// paths of coefficient products), in raw units.
    pub fn total_effects(&self, target: &str) -> Result<BTreeMap<String, f64>> {
        let t = self.index(target)?;
        let order = self.topological_order()?;
        let n = self.variables.len();
        let mut out = BTreeMap::new();
        for source in 0..n {
            let mut effect = vec![0.0; n];
            effect[source] = 1.0;
            for &v in &order {
                if v == source {
                    continue;
                }
                effect[v] = self
                    .edges
                    .iter()
                    .filter(|e| e.child == self.variables[v])
                    .map(|e| e.coefficient * effect[self.index(&e.parent).expect("validated")])
                    .sum();
            }
            if source != t {
                out.insert(self.variables[source].clone(), effect[t]);
            }
        }
        Ok(out)
    }
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl StructuralModel {
    /// Registry declaring every variable as a measured speaker attribute with a
    /// single measurement type named `value`.
    pub fn registry(&self) -> Registry {
        Registry {
            version: "1".into(),
            provenance: format!("structural model `{}`", self.name),
            attributes: self
                .variables
                .iter()
                .map(|v| AttributeSpec {
                    name: v.clone(),
                    scope: Scope::Speaker,
                    kind: AttributeKind::Measured,
                    value_kind: ValueKind::UnitFloat,
                    description: None,
                    measurement_types: vec![MeasurementType {
                        label: "value".into(),
                        key: "value".into(),
                        question: format!("How high is {v}?"),
                    }],
                })
                .collect(),
        }
    }
}

/// Mock answering perturbation prompts for `target` as if the model were the
/// respondent: `0.5 + slope · (given − 0.5)`, where the slope is the total
/// effect of the given variable on `target` in the display units of `data`.
/// Unperturbed prompts get 0.5.
pub fn perturbation_mock(model: &StructuralModel, data: &SyntheticData, target: &str) -> Result<MockProvider> {
    let effects = model.total_effects(target)?;
    let t = model.index(target)?;
    let slopes: HashMap<String, f64> = effects
        .into_iter()
        .map(|(given, effect)| {
            let g = model.index(&given).expect("known variable");
            let slope = effect * data.maps[g].scale / data.maps[t].scale;
            (given, slope)
        })
        .collect();
    Ok(MockProvider::new(move |q| {
        let value = match q.prefilled.first() {
            Some((given, g)) => 0.5 + slopes.get(given).copied().unwrap_or(0.0) * (g - 0.5),
            None => 0.5,
        };
        let key = serde_json::to_string(&q.open_key).expect("string serializes");
        Ok(format!("{{{key}: {}}}", value.clamp(0.0, 1.0)))
    }))
}

/// Simulate `n_rows` draws and rescale each column to [0, 1] by its min-max map.
///
/// Noise is drawn row by row in topological order from a ChaCha8 generator
/// seeded with `seed`.
pub fn generate(model: &StructuralModel, n_rows: usize, seed: u64) -> Result<SyntheticData> {
    if n_rows < 3 {
        return Err(Error::data(format!("need at least 3 rows, asked for {n_rows}")));
    }
    let order = model.topological_order()?;
    let n = model.variables.len();
    let parents: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|v| {
            model
                .edges
                .iter()
                .filter(|e| e.child == model.variables[v])
                .map(|e| (model.index(&e.parent).expect("validated"), e.coefficient))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![vec![0.0; n]; n_rows];
    for row in &mut raw {
        for &v in &order {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let signal: f64 = parents[v].iter().map(|&(p, c)| c * row[p]).sum();
            row[v] = signal + model.noise_std[v] * eps;
        }
    }

    let maps: Vec<AffineMap> = (0..n)
        .map(|v| {
            let lo = raw.iter().map(|r| r[v]).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|r| r[v]).fold(f64::NEG_INFINITY, f64::max);
            AffineMap {
                offset: lo,
                scale: if hi > lo { hi - lo } else { 1.0 },
            }
        })
        .collect();

    let columns = model
        .variables
        .iter()
        .map(|name| Column {
            name: name.clone(),
            kind: AttributeKind::Measured,
            value_kind: ValueKind::UnitFloat,
        })
        .collect();
    let mut matrix = DataMatrix::new((0..n_rows).map(Unit::synthetic).collect(), columns);
    for (cells, row) in matrix.cells.iter_mut().zip(&raw) {
        for (v, cell) in cells.iter_mut().enumerate() {
            *cell = Cell::Number(maps[v].apply(row[v]).clamp(0.0, 1.0));
        }
    }
    Ok(SyntheticData {
        model: model.name.clone(),
        seed,
        matrix,
        maps,
    })
}

fn check_labels(adn: &AdnGraph, model: &StructuralModel) -> Result<()> {
    let a: BTreeSet<&String> = adn.nodes.iter().collect();
    let m: BTreeSet<&String> = model.variables.iter().collect();
    if a != m {
        let only_adn: Vec<_> = a.difference(&m).collect();
        let only_model: Vec<_> = m.difference(&a).collect();
        return Err(Error::LabelMismatch(format!(
            "only in network: {only_adn:?}; only in model: {only_model:?}"
        )));
    }
    Ok(())
}

fn recovery_with(adn: &AdnGraph, truth: &BTreeSet<(String, String)>, rename: impl Fn(&str) -> String) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let mut seen = BTreeSet::new();
    for e in &adn.edges {
        if seen.len() == truth.len() {
            break;
        }
        seen.insert(unordered(&rename(&e.src), &rename(&e.dst)));
    }
    seen.intersection(truth).count() as f64 / truth.len() as f64
}

/// Share of the model's true skeleton pairs among the first |true edges|
/// distinct node pairs of the network, taken in edge-rank order.
pub fn recovery_score(adn: &AdnGraph, model: &StructuralModel) -> Result<f64> {
    check_labels(adn, model)?;
    Ok(recovery_with(adn, &model.skeleton(), str::to_string))
}

/// Mean recovery after relabelling the network's nodes at random.
pub fn permutation_baseline(adn: &AdnGraph, model: &StructuralModel, permutations: usize, seed: u64) -> Result<f64> {
    check_labels(adn, model)?;
    if permutations == 0 {
        return Err(Error::Usage("baseline needs at least one permutation".into()));
    }
    let truth = model.skeleton();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..permutations {
        let mut shuffled = adn.nodes.clone();
        shuffled.shuffle(&mut rng);
        let map: HashMap<&str, &str> = adn
            .nodes
            .iter()
            .map(String::as_str)
            .zip(shuffled.iter().map(String::as_str))
            .collect();
        total += recovery_with(adn, &truth, |l| map[l].to_string());
    }
    Ok(total / permutations as f64)
}

#[cfg(test)]
mod tests;
