use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Measurement, Value};
use crate::corpus::{ContextRecord, ContextValue};
use crate::error::{Error, Result};
use crate::registry::{AttributeKind, Registry, Scope, ValueKind};

/// One observation unit (row).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub slice_id: Option<String>,
    pub speaker: Option<String>,
}

impl Unit {
    pub fn observation(slice_id: &str, speaker: Option<&str>) -> Self {
        Self {
            id: format!("{slice_id}|{}", speaker.unwrap_or("-")),
            slice_id: Some(slice_id.to_string()),
            speaker: speaker.map(str::to_string),
        }
    }

    pub fn synthetic(index: usize) -> Self {
        Self {
            id: format!("row#{index}"),
            slice_id: None,
            speaker: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: AttributeKind,
    pub value_kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "snake_case")]
pub enum Cell {
    Missing,
    Number(f64),
    Category(String),
    Text(String),
}

impl Cell {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Category(s) | Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Missing => String::new(),
            Cell::Number(v) => v.to_string(),
            Cell::Category(s) | Cell::Text(s) => csv_field(s),
        }
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementValue {
    pub key: String,
    pub value: Option<f64>,
}

/// Per-measurement-type values behind one averaged cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProvenance {
    pub row: usize,
    pub column: usize,
    pub values: Vec<MeasurementValue>,
    /// Fewer measurement types than the registry declares were usable.
    pub partial: bool,
}

/// Observation units × attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    pub units: Vec<Unit>,
    pub columns: Vec<Column>,
    /// Row-major, `units.len()` rows of `columns.len()` cells.
    pub cells: Vec<Vec<Cell>>,
    #[serde(default)]
    pub provenance: Vec<CellProvenance>,
}

impl DataMatrix {
    pub fn new(units: Vec<Unit>, columns: Vec<Column>) -> Self {
        let cells = vec![vec![Cell::Missing; columns.len()]; units.len()];
        Self {
            units,
            columns,
            cells,
            provenance: Vec::new(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.column_index(name)?;
        Some(self.cells.iter().map(|row| &row[j]).collect())
    }

    pub fn rows(&self) -> usize {
        self.units.len()
    }

    pub fn provenance_of(&self, row: usize, column: usize) -> Option<&CellProvenance> {
        self.provenance.iter().find(|p| p.row == row && p.column == column)
    }

    /// Multiply a numeric column by `factor`.
    pub fn scale_column(&mut self, name: &str, factor: f64) -> Result<()> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::data(format!("no column `{name}`")))?;
        for row in &mut self.cells {
            if let Cell::Number(v) = &mut row[j] {
                *v *= factor;
            }
        }
        Ok(())
    }

    /// CSV with a leading `unit` column; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit");
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_field(&c.name));
        }
        out.push('\n');
        for (unit, row) in self.units.iter().zip(&self.cells) {
            out.push_str(&csv_field(&unit.id));
            for cell in row {
                out.push(',');
                out.push_str(&cell.csv());
            }
            out.push('\n');
        }
        out
    }

    /// Per-measurement-type values, one row per (unit, attribute, type).
    pub fn provenance_csv(&self) -> String {
        let mut out = String::from("unit,attribute,measurement,value,partial\n");
        for p in &self.provenance {
            for m in &p.values {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_field(&self.units[p.row].id),
                    csv_field(&self.columns[p.column].name),
                    csv_field(&m.key),
                    m.value.map(|v| v.to_string()).unwrap_or_default(),
                    u8::from(p.partial)
                ));
            }
        }
        out
    }
}

fn context_cell(v: ContextValue) -> Cell {
    match v {
        ContextValue::Text(s) => Cell::Text(s),
        ContextValue::Category(s) => Cell::Category(s),
        ContextValue::Integer(i) => Cell::Number(i as f64),
        ContextValue::Real(r) => Cell::Number(r),
    }
}

/// Assemble the observation matrix.
///
/// Rows are the context records, in order. Columns are the registry's
/// contextual attributes followed by every measured attribute that occurs in
/// `measurements`, both in registry order. A numeric cell is the mean of the
/// measurement types that parsed; slice-scoped attributes are repeated on each
/// speaker row of their slice. Missing stays missing.
pub fn aggregate(measurements: &[Measurement], registry: &Registry, context: &[ContextRecord]) -> Result<DataMatrix> {
    for m in measurements {
        let spec = registry.require(&m.attribute)?;
        if !spec.is_measured() {
            return Err(Error::data(format!("`{}` is not a measured attribute", m.attribute)));
        }
        if spec.measurement(&m.measurement).is_none() {
            return Err(Error::data(format!(
                "attribute `{}` has no measurement type `{}`",
                m.attribute, m.measurement
            )));
        }
    }

    let mut columns: Vec<Column> = registry
        .contextual()
        .map(|a| Column {
            name: a.name.clone(),
            kind: a.kind,
            value_kind: a.value_kind,
        })
        .collect();
    let n_context = columns.len();
    let measured: Vec<_> = registry
        .attributes
        .iter()
        .filter(|a| a.is_measured() && measurements.iter().any(|m| m.attribute == a.name))
        .collect();
    columns.extend(measured.iter().map(|a| Column {
        name: a.name.clone(),
        kind: a.kind,
        value_kind: a.value_kind,
    }));

    let units: Vec<Unit> = context
        .iter()
        .map(|r| Unit::observation(&r.slice_id, Some(&r.speaker)))
        .collect();
    let mut matrix = DataMatrix::new(units, columns);

    for (row, record) in context.iter().enumerate() {
        for j in 0..n_context {
            if let Some(v) = record.value(&matrix.columns[j].name) {
                matrix.cells[row][j] = context_cell(v);
            }
        }
    }

    // (slice, speaker?, attribute) -> measurement key -> value
    type Key<'a> = (&'a str, Option<&'a str>, &'a str);
    let mut grouped: HashMap<Key<'_>, BTreeMap<&str, Option<&Value>>> = HashMap::new();
    for m in measurements {
        grouped
            .entry((m.slice_id.as_str(), m.speaker.as_deref(), m.attribute.as_str()))
            .or_default()
            .insert(m.measurement.as_str(), m.value.as_ref());
    }

    let mut rows_by_slice: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut row_by_unit: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, r) in context.iter().enumerate() {
        rows_by_slice.entry(r.slice_id.as_str()).or_default().push(i);
        row_by_unit.insert((r.slice_id.as_str(), r.speaker.as_str()), i);
    }

    let mut keys: Vec<_> = grouped.keys().copied().collect();
    keys.sort();
    for key in keys {
        let (slice_id, speaker, attribute) = key;
        let values = &grouped[&key];
        let spec = registry.require(attribute)?;
        let column = matrix.column_index(attribute).expect("measured column exists");
        let rows: Vec<usize> = match (spec.scope, speaker) {
            (Scope::Speaker, Some(s)) => vec![*row_by_unit
                .get(&(slice_id, s))
                .ok_or_else(|| Error::data(format!("measurement for unknown observation unit {slice_id}|{s}")))?],
            (Scope::Slice, None) => rows_by_slice
                .get(slice_id)
                .cloned()
                .ok_or_else(|| Error::data(format!("measurement for unknown slice {slice_id}")))?,
            _ => {
                return Err(Error::data(format!(
                    "speaker/scope mismatch for `{attribute}` in {slice_id}"
                )))
            }
        };

        let ordered: Vec<(&str, Option<&Value>)> = spec
            .measurement_types
            .iter()
            .filter_map(|m| values.get(m.key.as_str()).map(|v| (m.key.as_str(), *v)))
            .collect();
        let present: Vec<&Value> = ordered.iter().filter_map(|(_, v)| *v).collect();
        let partial = present.len() < spec.measurement_types.len();

        let cell = match spec.value_kind {
            ValueKind::String => present
                .first()
                .map(|v| match v {
                    Value::Text(s) => Cell::Text(s.clone()),
                    Value::Number(n) => Cell::Text(n.to_string()),
                })
                .unwrap_or(Cell::Missing),
            _ => {
                let nums: Vec<f64> = present.iter().filter_map(|v| v.as_number()).collect();
                if nums.is_empty() {
                    Cell::Missing
                } else {
                    let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mean = nums.iter().sum::<f64>() / nums.len() as f64;
                    Cell::Number(mean.clamp(lo, hi))
                }
            }
        };
        let prov_values: Vec<MeasurementValue> = ordered
            .iter()
            .map(|(k, v)| MeasurementValue {
                key: k.to_string(),
                value: v.and_then(Value::as_number),
            })
            .collect();
        for row in rows {
            matrix.cells[row][column] = cell.clone();
            matrix.provenance.push(CellProvenance {
                row,
                column,
                values: prov_values.clone(),
                partial,
            });
        }
    }
    matrix.provenance.sort_by_key(|p| (p.row, p.column));
    Ok(matrix)
}
