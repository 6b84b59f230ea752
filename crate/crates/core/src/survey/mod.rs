//! Prompt construction, provider execution with caching and replay, answer
//! parsing, and aggregation into the observation matrix.

mod aggregate;
mod cache;
mod cost;
mod execute;
mod parse;
pub(crate) mod prompt;
mod provider;

use serde::{Deserialize, Serialize};

pub(crate) use aggregate::csv_field;
pub use aggregate::{aggregate, Cell, CellProvenance, Column, DataMatrix, MeasurementValue, Unit};
pub use cache::{ResponseCache, SessionLog, SessionRecord};
pub use cost::{cost, format_dollars, CostBreakdown, CostLedger, DEFAULT_RATE_INPUT, DEFAULT_RATE_OUTPUT};
pub use execute::{execute, ExecutionReport, FailureRecord, JobOutcome, Limits};
pub use parse::{parse_outcomes, parse_value};
pub use prompt::{build_multi_prompt, build_prompt, plan_jobs, skeleton_line, PromptConfig, PromptJob, DEFAULT_MODEL};
pub use provider::{
    Completion, CompletionRequest, LiveProvider, MockProvider, MockQuery, Provider, ProviderError, ProviderMode,
    ReplayProvider, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL,
};

/// A parsed answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    ParseError,
    RangeError,
    ProviderFailure,
}

/// One parsed (slice, speaker, attribute, measurement type) answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub job_id: String,
    pub slice_id: String,
    pub speaker: Option<String>,
    pub attribute: String,
    pub measurement: String,
    pub value: Option<Value>,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// A provider answer for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub job_id: String,
    pub key: String,
    pub response: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub provider: String,
    pub timestamp: u64,
}
