use std::collections::HashMap;

use regex::Regex;

use super::execute::JobOutcome;
use super::{Measurement, ParseStatus, PromptJob, Value};
use crate::error::{Error, Result};
use crate::registry::{Registry, ValueKind};

const NUMBER: &str = r"-?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?";
const STRING: &str = r#""(?:[^"\\]|\\.)*""#;

fn literal_to_value(literal: &str, kind: ValueKind) -> Result<Value> {
    if literal.starts_with('"') {
        if kind != ValueKind::String {
            return Err(Error::ValueParse(format!("expected a number, found {literal}")));
        }
        let s: String = serde_json::from_str(literal).map_err(|e| Error::ValueParse(e.to_string()))?;
        return Ok(Value::Text(s));
    }
    let v: f64 = literal
        .parse()
        .map_err(|_| Error::ValueParse(format!("bad number {literal}")))?;
    match kind {
        ValueKind::String => Ok(Value::Text(literal.to_string())),
        ValueKind::UnitFloat if !(0.0..=1.0).contains(&v) => Err(Error::Range { value: v }),
        _ => Ok(Value::Number(v)),
    }
}

/// Extract the value bound to `key` in a completion.
///
/// Accepts the key quoted or bare, with arbitrary prose around the JSON
/// fragment, and also a bare continuation of the prompt skeleton
/// (`0.7}`). Unit floats outside `[0, 1]` are rejected, never clamped.
pub fn parse_value(raw: &str, key: &str, kind: ValueKind) -> Result<Value> {
    let escaped = regex::escape(key);
    let keyed = Regex::new(&format!(r#"(?:"{escaped}"|\b{escaped}\b)\s*:\s*({NUMBER}|{STRING})"#))
        .expect("valid value pattern");
    if let Some(caps) = keyed.captures(raw) {
        return literal_to_value(&caps[1], kind);
    }
    let continuation =
        Regex::new(&format!(r#"^\s*({NUMBER}|{STRING})\s*(?:[,}}]|$)"#)).expect("valid continuation pattern");
    if let Some(caps) = continuation.captures(raw) {
        return literal_to_value(&caps[1], kind);
    }
    Err(Error::ValueParse(format!("no value for `{key}` in response")))
}

/// Parse every outcome into a [`Measurement`], in job order.
pub fn parse_outcomes(jobs: &[PromptJob], outcomes: &[JobOutcome], registry: &Registry) -> Result<Vec<Measurement>> {
    let by_id: HashMap<&str, &JobOutcome> = outcomes
        .iter()
        .map(|o| match o {
            JobOutcome::Response(r) => (r.job_id.as_str(), o),
            JobOutcome::Failed(f) => (f.job_id.as_str(), o),
        })
        .collect();
    jobs.iter()
        .map(|job| {
            let spec = registry.require(&job.attribute)?;
            let outcome = by_id
                .get(job.id.as_str())
                .ok_or_else(|| Error::data(format!("no outcome for job {}", job.id)))?;
            let (value, status, detail) = match outcome {
                JobOutcome::Failed(f) => (None, ParseStatus::ProviderFailure, Some(f.error.clone())),
                JobOutcome::Response(r) => match parse_value(&r.response, &job.attribute, spec.value_kind) {
                    Ok(v) => (Some(v), ParseStatus::Ok, None),
                    Err(e @ Error::Range { .. }) => (None, ParseStatus::RangeError, Some(e.to_string())),
                    Err(e) => (None, ParseStatus::ParseError, Some(e.to_string())),
                },
            };
            Ok(Measurement {
                job_id: job.id.clone(),
                slice_id: job.slice_id.clone(),
                speaker: job.speaker.clone(),
                attribute: job.attribute.clone(),
                measurement: job.measurement.clone(),
                value,
                status,
                detail,
            })
        })
        .collect()
}
