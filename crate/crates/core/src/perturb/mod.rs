//! Perturbation probe: state a value for a given attribute in the prompt,
//! shift it by ±0.1 and read how the target attribute answer moves.

mod compare;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Slice;
use crate::error::{Error, Result};
use crate::registry::{AttributeSpec, MeasurementType, Registry, Scope, ValueKind};
use crate::survey::prompt::{check_budget, excerpt_block, focus_line, json_key, PREAMBLE};
use crate::survey::{
    execute, parse_value, skeleton_line, CostLedger, JobOutcome, Limits, PromptConfig, PromptJob, Provider,
};

pub use compare::{compare_methods, spearman, ComparisonRow, ComparisonTable, RankCorrelations};

/// Size of the shift applied to the given attribute in each direction.
pub const DELTA: f64 = 0.1;

const PERTURB_INSTRUCTION: &str =
    "The value of the first attribute is already known. Give the value of the second attribute as a number between 0 and 1.";
const COMPLETE_INSTRUCTION: &str = "Respond only by completing the following JSON object:";

/// An attribute and one of its measurement types, written `name` or
/// `name:key`. A bare name means the first measurement type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeRef {
    pub attribute: String,
    pub measurement: Option<String>,
}

impl AttributeRef {
    pub fn new(attribute: &str) -> Self {
        Self {
            attribute: attribute.into(),
            measurement: None,
        }
    }

    fn resolve<'r>(&self, registry: &'r Registry) -> Result<(&'r AttributeSpec, &'r MeasurementType)> {
        let spec = registry.require(&self.attribute)?;
        if !spec.is_measured() || spec.scope != Scope::Speaker || spec.value_kind != ValueKind::UnitFloat {
            return Err(Error::Usage(format!(
                "`{}` must be a numeric speaker-level measured attribute to be perturbed",
                spec.name
            )));
        }
        let m = match &self.measurement {
            Some(key) => spec
                .measurement(key)
                .ok_or_else(|| Error::Usage(format!("`{}` has no measurement type `{key}`", spec.name)))?,
            None => &spec.measurement_types[0],
        };
        Ok((spec, m))
    }
}

impl FromStr for AttributeRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, m) = match s.split_once(':') {
            Some((a, m)) => (a.trim(), Some(m.trim().to_string())),
            None => (s.trim(), None),
        };
        if a.is_empty() {
            return Err(Error::Usage(format!("empty attribute in `{s}`")));
        }
        Ok(Self {
            attribute: a.into(),
            measurement: m,
        })
    }
}

impl fmt::Display for AttributeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.measurement {
            Some(m) => write!(f, "{}:{m}", self.attribute),
            None => f.write_str(&self.attribute),
        }
    }
}

/// One probe: a speaker in a slice, a (given, target) pair and the stored
/// value of the given attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRequest {
    pub slice_id: String,
    pub speaker: String,
    pub given: AttributeRef,
    pub target: AttributeRef,
    pub base_value: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    DELTA
}

impl PerturbRequest {
    pub fn new(slice_id: &str, speaker: &str, given: AttributeRef, target: AttributeRef, base_value: f64) -> Self {
        Self {
            slice_id: slice_id.into(),
            speaker: speaker.into(),
            given,
            target,
            base_value,
            delta: DELTA,
        }
    }

    fn job_id(&self, branch: &str) -> String {
        format!(
            "{}|{}|{}>{}|{branch}",
            self.slice_id, self.speaker, self.given, self.target
        )
    }
}

/// Given values stated in the two prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branches {
    pub plus: f64,
    pub minus: f64,
    /// A branch hit 0 or 1.
    pub clamped: bool,
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

/// `base ± delta`, clamped to [0, 1] and rounded to the 4 decimals shown in the prompt.
pub fn branches(base: f64, delta: f64) -> Result<Branches> {
    if !(0.0..=1.0).contains(&base) {
        return Err(Error::Range { value: base });
    }
    let (p, m) = (base + delta, base - delta);
    Ok(Branches {
        plus: round4(p.clamp(0.0, 1.0)),
        minus: round4(m.clamp(0.0, 1.0)),
        clamped: !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&m),
    })
}

/// Prompt stating `given_value` for the given attribute and asking for the target.
///
/// Layout (lines joined by `\n`): preamble, blank, excerpt block, blank,
/// speaker focus line, `"<given>": <question>`, `"<target>": <question>`,
/// the perturbation instruction, the completion instruction, and the skeleton
/// `{"<given>": 0.6000, "<target>": `.
pub fn build_perturbation_prompt(
    slice: &Slice,
    speaker: &str,
    given: (&AttributeSpec, &MeasurementType),
    given_value: f64,
    target: (&AttributeSpec, &MeasurementType),
    cfg: &PromptConfig,
) -> Result<String> {
    let lines = [
        PREAMBLE.to_string(),
        String::new(),
        excerpt_block(slice),
        String::new(),
        focus_line(speaker),
        format!("{}: {}", json_key(&given.0.name), given.1.question),
        format!("{}: {}", json_key(&target.0.name), target.1.question),
        PERTURB_INSTRUCTION.to_string(),
        COMPLETE_INSTRUCTION.to_string(),
        skeleton_line(&[(&given.0.name, given_value)], &target.0.name),
    ];
    let prompt = lines.join("\n");
    check_budget(&prompt, cfg)?;
    Ok(prompt)
}

/// Two jobs per request (`plus` then `minus`), in request order.
pub fn plan_perturbations(
    slices: &[Slice],
    requests: &[PerturbRequest],
    registry: &Registry,
    cfg: &PromptConfig,
) -> Result<Vec<PromptJob>> {
    let by_id: HashMap<&str, &Slice> = slices.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut jobs = Vec::with_capacity(2 * requests.len());
    for r in requests {
        let slice = by_id
            .get(r.slice_id.as_str())
            .ok_or_else(|| Error::data(format!("unknown slice {}", r.slice_id)))?;
        if !slice.speakers().iter().any(|s| *s == r.speaker) {
            return Err(Error::data(format!("{} does not speak in {}", r.speaker, r.slice_id)));
        }
        let given = r.given.resolve(registry)?;
        let target = r.target.resolve(registry)?;
        if given.0.name == target.0.name {
            return Err(Error::Usage(format!("given and target are both `{}`", given.0.name)));
        }
        let b = branches(r.base_value, r.delta)?;
        for (branch, value) in [("plus", b.plus), ("minus", b.minus)] {
            jobs.push(PromptJob {
                id: r.job_id(branch),
                slice_id: r.slice_id.clone(),
                speaker: Some(r.speaker.clone()),
                attribute: target.0.name.clone(),
                measurement: target.1.key.clone(),
                prompt: build_perturbation_prompt(slice, &r.speaker, given, value, target, cfg)?,
                model: cfg.model.clone(),
                temperature: cfg.temperature,
            });
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub slice_id: String,
    pub speaker: String,
    pub given: String,
    pub target: String,
    pub base_value: f64,
    pub given_plus: f64,
    pub given_minus: f64,
    /// Given values echoed back in the two answers, when present.
    pub given_plus_echo: Option<f64>,
    pub given_minus_echo: Option<f64>,
    pub target_plus: Option<f64>,
    pub target_minus: Option<f64>,
    /// `target_plus − target_minus`; `None` when a branch failed.
    pub influence: Option<f64>,
    pub clamped: bool,
    pub note: Option<String>,
}

impl PerturbationResult {
    pub fn is_valid(&self) -> bool {
        self.influence.is_some()
    }
}

fn outcome_text<'a>(outcomes: &'a HashMap<&str, &JobOutcome>, id: &str) -> std::result::Result<&'a str, String> {
    match outcomes.get(id) {
        Some(JobOutcome::Response(r)) => Ok(&r.response),
        Some(JobOutcome::Failed(f)) => Err(format!("provider failure: {}", f.error)),
        None => Err("no outcome".into()),
    }
}

/// Pair the two branch answers of every request.
pub fn collect_results(requests: &[PerturbRequest], outcomes: &[JobOutcome]) -> Vec<PerturbationResult> {
    let by_id: HashMap<&str, &JobOutcome> = outcomes
        .iter()
        .map(|o| match o {
            JobOutcome::Response(r) => (r.job_id.as_str(), o),
            JobOutcome::Failed(f) => (f.job_id.as_str(), o),
        })
        .collect();
    requests
        .iter()
        .map(|r| {
            let b = branches(r.base_value, r.delta).expect("validated when planned");
            let mut notes = Vec::new();
            let mut read = |branch: &str| -> (Option<f64>, Option<f64>) {
                match outcome_text(&by_id, &r.job_id(branch)) {
                    Ok(text) => {
                        let target = parse_value(text, &r.target.attribute, ValueKind::UnitFloat)
                            .map(|v| v.as_number())
                            .unwrap_or_else(|e| {
                                notes.push(format!("{branch}: {e}"));
                                None
                            });
                        let echo = parse_value(text, &r.given.attribute, ValueKind::UnitFloat)
                            .ok()
                            .and_then(|v| v.as_number());
                        (target, echo)
                    }
                    Err(e) => {
                        notes.push(format!("{branch}: {e}"));
                        (None, None)
                    }
                }
            };
            let (target_plus, given_plus_echo) = read("plus");
            let (target_minus, given_minus_echo) = read("minus");
            if b.clamped {
                notes.push(format!(
                    "given clamped to [0, 1]: span {:.4} instead of {:.4}",
                    b.plus - b.minus,
                    2.0 * r.delta
                ));
            }
            PerturbationResult {
                slice_id: r.slice_id.clone(),
                speaker: r.speaker.clone(),
                given: r.given.attribute.clone(),
                target: r.target.attribute.clone(),
                base_value: r.base_value,
                given_plus: b.plus,
                given_minus: b.minus,
                given_plus_echo,
                given_minus_echo,
                target_plus,
                target_minus,
                influence: target_plus.zip(target_minus).map(|(p, m)| p - m),
                clamped: b.clamped,
                note: (!notes.is_empty()).then(|| notes.join("; ")),
            }
        })
        .collect()
}

/// Run one probe directly against a provider, without caching.
#[allow(clippy::too_many_arguments)]
pub fn perturb_pair(
    slice: &Slice,
    speaker: &str,
    given: &AttributeRef,
    target: &AttributeRef,
    base_value: f64,
    registry: &Registry,
    provider: &dyn Provider,
    cfg: &PromptConfig,
) -> Result<PerturbationResult> {
    let request = PerturbRequest::new(&slice.id, speaker, given.clone(), target.clone(), base_value);
    let requests = [request];
    let jobs = plan_perturbations(std::slice::from_ref(slice), &requests, registry, cfg)?;
    let report = execute(&jobs, provider, None, None, &Limits::default(), &CostLedger::default())?;
    Ok(collect_results(&requests, &report.outcomes).remove(0))
}

/// Results as CSV, one row per probe.
pub fn results_csv(results: &[PerturbationResult]) -> String {
    use crate::survey::csv_field;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(
        "slice_id,speaker,given,target,base_value,given_plus,given_minus,target_plus,target_minus,influence,clamped,note\n",
    );
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&r.slice_id),
            csv_field(&r.speaker),
            csv_field(&r.given),
            csv_field(&r.target),
            r.base_value,
            r.given_plus,
            r.given_minus,
            opt(r.target_plus),
            opt(r.target_minus),
            opt(r.influence),
            u8::from(r.clamped),
            csv_field(r.note.as_deref().unwrap_or(""))
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub given: String,
    pub mean: f64,
    pub count: usize,
    /// Sample standard deviation over √count; `None` for a single result.
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceTable {
    pub target: String,
    /// Sorted by given attribute.
    pub rows: Vec<InfluenceRow>,
    pub notes: Vec<String>,
}

impl InfluenceTable {
    pub fn get(&self, given: &str) -> Option<&InfluenceRow> {
        self.rows.iter().find(|r| r.given == given)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("given,target,mean_influence,count,std_err\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                crate::survey::csv_field(&r.given),
                crate::survey::csv_field(&self.target),
                r.mean,
                r.count,
                r.std_err.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// Mean influence of each given attribute on `target`. Invalid results are
/// ignored; a given attribute with no valid result is left out with a note.
pub fn influence_table(results: &[PerturbationResult], target: &str) -> Result<InfluenceTable> {
    let relevant: Vec<&PerturbationResult> = results.iter().filter(|r| r.target == target).collect();
    if relevant.is_empty() {
        return Err(Error::data(format!("no perturbation results for target `{target}`")));
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &relevant {
        let values = groups.entry(r.given.as_str()).or_default();
        if let Some(i) = r.influence {
            values.push(i);
        }
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (given, values) in groups {
        if values.is_empty() {
            notes.push(format!("`{given}` omitted: no valid results"));
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_err = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        rows.push(InfluenceRow {
            given: given.to_string(),
            mean,
            count: values.len(),
            std_err,
        });
    }
    Ok(InfluenceTable {
        target: target.to_string(),
        rows,
        notes,
    })
}
