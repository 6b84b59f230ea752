//! Attribute schema: contextual vs. measured, speaker vs. slice scope, and the
//! question ensemble behind each measured attribute.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ContextRecord;
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../data/registry.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Speaker,
    Slice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Contextual,
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    UnitFloat,
    Categorical,
    Integer,
    Real,
    String,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::UnitFloat | ValueKind::Integer | ValueKind::Real)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementType {
    /// Label as declared in the registry file.
    pub label: String,
    /// Label made unique within the attribute (`label_2`, `label_3`, ... for repeats).
    pub key: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpec {
    pub name: String,
    pub scope: Scope,
    pub kind: AttributeKind,
    pub value_kind: ValueKind,
    pub description: Option<String>,
    pub measurement_types: Vec<MeasurementType>,
}

impl AttributeSpec {
    pub fn is_measured(&self) -> bool {
        self.kind == AttributeKind::Measured
    }

    pub fn measurement(&self, key: &str) -> Option<&MeasurementType> {
        self.measurement_types.iter().find(|m| m.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub version: String,
    pub provenance: String,
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LintReport {
    pub warnings: Vec<String>,
}

// On-disk shape. Enumerations are read as plain strings so that schema errors
// can name the offending attribute.
#[derive(Serialize, Deserialize)]
struct RawRegistry {
    version: String,
    #[serde(default)]
    provenance: String,
    #[serde(rename = "attribute", default)]
    attributes: Vec<RawAttribute>,
}

#[derive(Serialize, Deserialize)]
struct RawAttribute {
    name: String,
    scope: String,
    kind: String,
    value_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    measurements: Vec<RawMeasurement>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasurement {
    label: String,
    question: String,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(attr: &str, field: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|_| Error::Registry {
        attribute: attr.to_string(),
        message: format!("unknown {field} `{value}`"),
    })
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl Registry {
    /// The registry shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED)
            .map(|(r, _)| r)
            .expect("bundled registry is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map(|(r, _)| r)
    }

    /// Parse and validate a registry document, returning lint warnings.
    pub fn from_toml(text: &str) -> Result<(Self, LintReport)> {
        let raw: RawRegistry = toml::from_str(text).map_err(|e| Error::Registry {
            attribute: "<document>".into(),
            message: e.to_string(),
        })?;
        let mut lint = LintReport::default();
        let mut seen = HashSet::new();
        let mut attributes = Vec::with_capacity(raw.attributes.len());

        for a in raw.attributes {
            let err = |message: String| Error::Registry {
                attribute: a.name.clone(),
                message,
            };
            if a.name.trim().is_empty() {
                return Err(err("empty attribute name".into()));
            }
            if !seen.insert(a.name.clone()) {
                return Err(err("duplicate attribute name".into()));
            }
            let scope: Scope = parse_enum(&a.name, "scope", &a.scope)?;
            let kind: AttributeKind = parse_enum(&a.name, "kind", &a.kind)?;
            let value_kind: ValueKind = parse_enum(&a.name, "value_kind", &a.value_kind)?;

            match kind {
                AttributeKind::Contextual if !a.measurements.is_empty() => {
                    return Err(err("contextual attributes take no questions".into()));
                }
                AttributeKind::Measured if a.measurements.is_empty() => {
                    return Err(err("measured attribute without questions".into()));
                }
                AttributeKind::Measured if !matches!(value_kind, ValueKind::UnitFloat | ValueKind::String) => {
                    return Err(err(format!(
                        "measured attributes are unit_float or string, not {}",
                        a.value_kind
                    )));
                }
                AttributeKind::Contextual if !ContextRecord::FIELD_NAMES.contains(&a.name.as_str()) => {
                    lint.warnings.push(format!(
                        "contextual attribute `{}` has no context field and will stay empty",
                        a.name
                    ));
                }
                _ => {}
            }

            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            let mut measurement_types = Vec::with_capacity(a.measurements.len());
            for m in &a.measurements {
                if m.label.trim().is_empty() || m.question.trim().is_empty() {
                    return Err(err("empty measurement label or question".into()));
                }
                let ordinal = counts.entry(m.label.as_str()).or_insert(0);
                *ordinal += 1;
                let key = if *ordinal == 1 {
                    m.label.clone()
                } else {
                    lint.warnings.push(format!(
                        "attribute `{}`: duplicate measurement label `{}` renamed to `{}_{}`",
                        a.name, m.label, m.label, ordinal
                    ));
                    format!("{}_{}", m.label, ordinal)
                };
                measurement_types.push(MeasurementType {
                    label: m.label.clone(),
                    key,
                    question: m.question.clone(),
                });
            }
            if measurement_types.iter().map(|m| &m.key).collect::<HashSet<_>>().len() != measurement_types.len() {
                return Err(err("measurement keys collide after disambiguation".into()));
            }

            attributes.push(AttributeSpec {
                name: a.name,
                scope,
                kind,
                value_kind,
                description: a.description,
                measurement_types,
            });
        }

        Ok((
            Registry {
                version: raw.version,
                provenance: raw.provenance,
                attributes,
            },
            lint,
        ))
    }

    /// Serialize back to the registry file format.
    pub fn to_toml(&self) -> String {
        let raw = RawRegistry {
            version: self.version.clone(),
            provenance: self.provenance.clone(),
            attributes: self
                .attributes
                .iter()
                .map(|a| RawAttribute {
                    name: a.name.clone(),
                    scope: enum_name(&a.scope),
                    kind: enum_name(&a.kind),
                    value_kind: enum_name(&a.value_kind),
                    description: a.description.clone(),
                    measurements: a
                        .measurement_types
                        .iter()
                        .map(|m| RawMeasurement {
                            label: m.label.clone(),
                            question: m.question.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("registry serializes")
    }

    pub fn get(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&AttributeSpec> {
        self.get(name)
            .ok_or_else(|| Error::data(format!("unknown attribute `{name}`")))
    }

    pub fn measured(&self, scope: Scope) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes
            .iter()
            .filter(move |a| a.is_measured() && a.scope == scope)
    }

    pub fn contextual(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes.iter().filter(|a| a.kind == AttributeKind::Contextual)
    }

    /// Number of distinct declared (attribute, label) measurement keys in `scope`.
    pub fn measurement_key_count(&self, scope: Scope) -> usize {
        self.measured(scope)
            .map(|a| {
                a.measurement_types
                    .iter()
                    .map(|m| m.label.as_str())
                    .collect::<BTreeSet<_>>()
                    .len()
            })
            .sum()
    }

    pub fn contextual_count(&self) -> usize {
        self.contextual().count()
    }
}

/// The ensemble of questions that defines a measured attribute.
pub fn questions_for(attr: &AttributeSpec) -> Result<&[MeasurementType]> {
    if !attr.is_measured() {
        return Err(Error::Usage(format!(
            "`{}` is contextual and has no questions",
            attr.name
        )));
    }
    Ok(&attr.measurement_types)
}

/// Load a registry file and report warnings; errors abort.
pub fn lint(path: &Path) -> Result<(Registry, LintReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Registry::from_toml(&text)
}
