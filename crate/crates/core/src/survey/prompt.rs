use serde::{Deserialize, Serialize};

use crate::corpus::{ContextRecord, Slice, Tokenizer};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::registry::{AttributeSpec, MeasurementType, Registry, Scope, ValueKind};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-0613";

pub(crate) const PREAMBLE: &str = "You are analysing an excerpt of a US presidential debate. Read it carefully.";
const NUMERIC_INSTRUCTION: &str =
    "Answer with a number between 0 and 1, where 0 is the lowest and 1 is the highest possible value.";
const TEXT_INSTRUCTION: &str = "Answer with a short text.";
const COMPLETE_INSTRUCTION: &str = "Respond only by completing the following JSON object:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub model: String,
    pub temperature: f64,
    /// Largest prompt the model context allows, in tokens of `tokenizer`.
    pub max_prompt_tokens: usize,
    pub tokenizer: Tokenizer,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            model: DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_prompt_tokens: 3900,
            tokenizer: Tokenizer::Approx,
        }
    }
}

/// A single query: one slice, at most one speaker, one measurement type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptJob {
    pub id: String,
    pub slice_id: String,
    pub speaker: Option<String>,
    pub attribute: String,
    pub measurement: String,
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
}

impl PromptJob {
    pub fn make_id(slice_id: &str, speaker: Option<&str>, attribute: &str, measurement: &str) -> String {
        format!("{slice_id}|{}|{attribute}|{measurement}", speaker.unwrap_or("-"))
    }

    /// Content address of the request: prompt, model and temperature.
    pub fn cache_key(&self) -> String {
        cache_key(&self.prompt, &self.model, self.temperature)
    }
}

pub(crate) fn cache_key(prompt: &str, model: &str, temperature: f64) -> String {
    let mut buf = Vec::with_capacity(prompt.len() + model.len() + 32);
    buf.extend_from_slice(prompt.as_bytes());
    buf.push(0);
    buf.extend_from_slice(model.as_bytes());
    buf.push(0);
    buf.extend_from_slice(format!("{temperature:?}").as_bytes());
    sha256_hex(&buf)
}

pub(crate) fn json_key(name: &str) -> String {
    serde_json::to_string(name).expect("string serializes")
}

/// `{"a": 0.6000, "b": ` style skeleton with pre-filled pairs and one open key.
pub fn skeleton_line(prefilled: &[(&str, f64)], open: &str) -> String {
    let mut s = String::from("{");
    for (k, v) in prefilled {
        s.push_str(&format!("{}: {v:.4}, ", json_key(k)));
    }
    s.push_str(&json_key(open));
    s.push_str(": ");
    s
}

pub(crate) fn excerpt_block(slice: &Slice) -> String {
    format!("[EXCERPT START]\n{}\n[EXCERPT END]", slice.render())
}

pub(crate) fn check_budget(prompt: &str, cfg: &PromptConfig) -> Result<()> {
    let tokens = cfg.tokenizer.count(prompt);
    if tokens > cfg.max_prompt_tokens {
        return Err(Error::ContextBudget {
            tokens,
            budget: cfg.max_prompt_tokens,
        });
    }
    Ok(())
}

pub(crate) fn focus_line(speaker: &str) -> String {
    format!("Focus on the speaker {}.", speaker.to_uppercase())
}

/// Render the single-question prompt.
///
/// Layout (lines joined by `\n`): preamble, blank, excerpt block, blank,
/// speaker focus line (speaker scope only), `Question: ...`, answer
/// instruction, completion instruction, and the open JSON skeleton
/// `{"<attribute>": `.
pub fn build_prompt(
    slice: &Slice,
    speaker: Option<&str>,
    attribute: &AttributeSpec,
    measurement: &MeasurementType,
    cfg: &PromptConfig,
) -> Result<String> {
    if !attribute.is_measured() {
        return Err(Error::Usage(format!(
            "`{}` is not a measured attribute",
            attribute.name
        )));
    }
    match (attribute.scope, speaker) {
        (Scope::Speaker, None) => return Err(Error::Usage(format!("`{}` needs a speaker", attribute.name))),
        (Scope::Slice, Some(_)) => return Err(Error::Usage(format!("`{}` is slice-scoped", attribute.name))),
        _ => {}
    }

    let mut lines = vec![PREAMBLE.to_string(), String::new(), excerpt_block(slice), String::new()];
    if let Some(s) = speaker {
        lines.push(focus_line(s));
    }
    lines.push(format!("Question: {}", measurement.question));
    lines.push(
        match attribute.value_kind {
            ValueKind::String => TEXT_INSTRUCTION,
            _ => NUMERIC_INSTRUCTION,
        }
        .to_string(),
    );
    lines.push(COMPLETE_INSTRUCTION.to_string());
    lines.push(skeleton_line(&[], &attribute.name));
    let prompt = lines.join("\n");
    check_budget(&prompt, cfg)?;
    Ok(prompt)
}

/// Experimental prompt asking for several attributes at once. Not used by the
/// analysis stages.
pub fn build_multi_prompt(
    slice: &Slice,
    speaker: &str,
    attributes: &[(&AttributeSpec, &MeasurementType)],
    cfg: &PromptConfig,
) -> Result<String> {
    let (first, _) = attributes
        .first()
        .ok_or_else(|| Error::Usage("no attributes given".into()))?;
    let mut lines = vec![
        PREAMBLE.to_string(),
        String::new(),
        excerpt_block(slice),
        String::new(),
        focus_line(speaker),
    ];
    for (a, m) in attributes {
        lines.push(format!("{}: {}", json_key(&a.name), m.question));
    }
    lines.push(NUMERIC_INSTRUCTION.to_string());
    lines.push("Respond only by completing the following JSON object with a value for every key above:".into());
    lines.push(skeleton_line(&[], &first.name));
    let prompt = lines.join("\n");
    check_budget(&prompt, cfg)?;
    Ok(prompt)
}

/// Expand slices, speakers and attributes into jobs ordered by job id.
///
/// `speakers` are the context records of the slices; slice-scoped attributes
/// produce one job per slice and measurement type.
pub fn plan_jobs(
    slices: &[Slice],
    speakers: &[ContextRecord],
    registry: &Registry,
    attributes: &[String],
    cfg: &PromptConfig,
) -> Result<Vec<PromptJob>> {
    let specs: Vec<&AttributeSpec> = attributes.iter().map(|a| registry.require(a)).collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for slice in slices {
        for spec in &specs {
            let targets: Vec<Option<&str>> = match spec.scope {
                Scope::Slice => vec![None],
                Scope::Speaker => speakers
                    .iter()
                    .filter(|r| r.slice_id == slice.id)
                    .map(|r| Some(r.speaker.as_str()))
                    .collect(),
            };
            for speaker in targets {
                for m in crate::registry::questions_for(spec)? {
                    let prompt = build_prompt(slice, speaker, spec, m, cfg)?;
                    jobs.push(PromptJob {
                        id: PromptJob::make_id(&slice.id, speaker, &spec.name, &m.key),
                        slice_id: slice.id.clone(),
                        speaker: speaker.map(str::to_string),
                        attribute: spec.name.clone(),
                        measurement: m.key.clone(),
                        prompt,
                        model: cfg.model.clone(),
                        temperature: cfg.temperature,
                    });
                }
            }
        }
    }
    jobs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;

    fn slice() -> Slice {
        let turns = vec![
            Turn {
                speaker: "nixon".into(),
                text: "We must stay strong.".into(),
                index: 0,
            },
            Turn {
                speaker: "kennedy".into(),
                text: "We must move again.".into(),
                index: 1,
            },
        ];
        Slice {
            id: "1960-1#0".into(),
            debate_id: "1960-1".into(),
            target_tokens: 2500,
            turn_tokens: vec![7, 7],
            token_count: 14,
            turns,
            start: 0,
            end: 40,
            oversized: false,
        }
    }

    #[test]
    fn speaker_prompt_layout() {
        let r = Registry::bundled();
        let score = r.get("score").unwrap();
        let p = build_prompt(
            &slice(),
            Some("nixon"),
            score,
            &score.measurement_types[0],
            &PromptConfig::default(),
        )
        .unwrap();
        let expected = "You are analysing an excerpt of a US presidential debate. Read it carefully.\n\
\n\
[EXCERPT START]\n\
NIXON: We must stay strong.\n\
KENNEDY: We must move again.\n\
[EXCERPT END]\n\
\n\
Focus on the speaker NIXON.\n\
Question: How well does the speaker argue?\n\
Answer with a number between 0 and 1, where 0 is the lowest and 1 is the highest possible value.\n\
Respond only by completing the following JSON object:\n\
{\"score\": ";
        assert_eq!(p, expected);
    }

    #[test]
    fn slice_scope_has_no_focus_line() {
        let r = Registry::bundled();
        let topic = r.get("topic").unwrap();
        let p = build_prompt(
            &slice(),
            None,
            topic,
            &topic.measurement_types[0],
            &PromptConfig::default(),
        )
        .unwrap();
        assert!(!p.contains("Focus on the speaker"));
        assert!(p.contains(TEXT_INSTRUCTION));
        assert!(build_prompt(
            &slice(),
            Some("nixon"),
            topic,
            &topic.measurement_types[0],
            &PromptConfig::default()
        )
        .is_err());
    }

    #[test]
    fn deterministic() {
        let r = Registry::bundled();
        let a = r.get("clarity").unwrap();
        let cfg = PromptConfig::default();
        let p1 = build_prompt(&slice(), Some("kennedy"), a, &a.measurement_types[1], &cfg).unwrap();
        let p2 = build_prompt(&slice(), Some("kennedy"), a, &a.measurement_types[1], &cfg).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn budget_exceeded() {
        let r = Registry::bundled();
        let a = r.get("score").unwrap();
        let cfg = PromptConfig {
            max_prompt_tokens: 20,
            ..Default::default()
        };
        assert!(matches!(
            build_prompt(&slice(), Some("nixon"), a, &a.measurement_types[0], &cfg),
            Err(Error::ContextBudget { .. })
        ));
    }

    #[test]
    fn cache_key_tracks_model_and_temperature() {
        let k = cache_key("p", "m", 0.0);
        assert_ne!(k, cache_key("p", "m2", 0.0));
        assert_ne!(k, cache_key("p", "m", 0.5));
        assert_eq!(k, cache_key("p", "m", 0.0));
    }

    #[test]
    fn skeleton() {
        assert_eq!(
            skeleton_line(&[("clarity", 0.6)], "score"),
            "{\"clarity\": 0.6000, \"score\": "
        );
    }
}
