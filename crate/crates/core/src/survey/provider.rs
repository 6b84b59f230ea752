use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::cache::SessionRecord;
use crate::corpus::Tokenizer;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Replay,
    Mock,
}

impl std::str::FromStr for ProviderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(ProviderMode::Live),
            "replay" => Ok(ProviderMode::Replay),
            "mock" => Ok(ProviderMode::Mock),
            other => Err(Error::Config(format!("unknown provider `{other}` (live|replay|mock)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub key: &'a str,
    pub job_id: &'a str,
    pub prompt: &'a str,
    pub model: &'a str,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub timestamp: u64,
    /// Provider that originally produced the text, when it differs from the
    /// one answering (replay).
    pub origin: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderError {
    /// Worth retrying (transport failure, rate limiting, server error).
    Transient(String),
    /// Retrying cannot help.
    Fatal(String),
    ReplayMiss {
        key: String,
    },
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError>;
}

/// What a mock sees of a prompt.
#[derive(Debug, Clone)]
pub struct MockQuery<'a> {
    pub prompt: &'a str,
    pub excerpt: &'a str,
    pub speaker: Option<&'a str>,
    /// Key left open in the JSON skeleton.
    pub open_key: String,
    /// Pairs already filled in by the prompt, in order.
    pub prefilled: Vec<(String, f64)>,
    pub wants_text: bool,
}

fn skeleton_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r#""((?:[^"\\]|\\.)*)"\s*:\s*(-?[0-9]+(?:\.[0-9]+)?)?"#).expect("valid pattern"))
}

impl<'a> MockQuery<'a> {
    pub fn from_prompt(prompt: &'a str) -> Self {
        let skeleton = prompt.lines().last().unwrap_or("");
        let mut prefilled = Vec::new();
        let mut open_key = String::new();
        for caps in skeleton_pattern().captures_iter(skeleton) {
            let key: String = serde_json::from_str(&format!("\"{}\"", &caps[1])).unwrap_or_default();
            match caps.get(2) {
                Some(v) => prefilled.push((key, v.as_str().parse().unwrap_or(f64::NAN))),
                None => open_key = key,
            }
        }
        let excerpt = match (prompt.find("[EXCERPT START]"), prompt.find("[EXCERPT END]")) {
            (Some(a), Some(b)) if a < b => &prompt[a..b],
            _ => "",
        };
        let speaker = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Focus on the speaker ").map(|s| s.trim_end_matches('.')));
        MockQuery {
            prompt,
            excerpt,
            speaker,
            open_key,
            prefilled,
            wants_text: prompt.contains("Answer with a short text."),
        }
    }
}

type MockFn = dyn Fn(&MockQuery<'_>) -> Result<String, ProviderError> + Send + Sync;

/// Offline provider computing its answer from the prompt.
#[derive(Clone)]
pub struct MockProvider {
    respond: Arc<MockFn>,
    calls: Arc<AtomicUsize>,
}

fn json_key(k: &str) -> String {
    serde_json::to_string(k).expect("string serializes")
}

fn format_answer(q: &MockQuery<'_>, value: &str) -> String {
    let mut out = String::from("{");
    for (k, v) in &q.prefilled {
        out.push_str(&format!("{}: {v}, ", json_key(k)));
    }
    out.push_str(&format!("{}: {value}}}", json_key(&q.open_key)));
    out
}

fn unit_hash(parts: &[&str]) -> f64 {
    let digest = sha256_hex(parts.join("\u{1f}").as_bytes());
    let n = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    (n >> 11) as f64 / (1u64 << 53) as f64
}

const MOCK_TOPICS: [&str; 6] = [
    "FOREIGN POLICY",
    "ECONOMY",
    "CIVIL RIGHTS",
    "HEALTH CARE",
    "DEFENSE SPENDING",
    "EDUCATION",
];

impl MockProvider {
    pub fn new(respond: impl Fn(&MockQuery<'_>) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        Self {
            respond: Arc::new(respond),
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Every numeric answer is `value`.
    pub fn constant(value: f64) -> Self {
        Self::new(move |q| Ok(format_answer(q, &value.to_string())))
    }

    /// Answer `intercept + slope * g` where `g` is the first pre-filled value
    /// (the given attribute of a perturbation prompt), or `intercept` if none.
    pub fn linear(intercept: f64, slope: f64) -> Self {
        Self::linear_by_given(intercept, HashMap::new(), slope)
    }

    /// Like [`MockProvider::linear`] with a slope per given attribute.
    pub fn linear_by_given(intercept: f64, slopes: HashMap<String, f64>, default_slope: f64) -> Self {
        Self::new(move |q| {
            let value = match q.prefilled.first() {
                Some((given, g)) => intercept + slopes.get(given).copied().unwrap_or(default_slope) * g,
                None => intercept,
            };
            Ok(format_answer(q, &value.to_string()))
        })
    }

    /// Deterministic pseudo-survey: each (excerpt, speaker) pair has a latent
    /// quality shared by all of its attributes, plus per-question noise, so
    /// attributes are correlated. Values are rounded to two decimals.
    pub fn synthetic(seed: u64) -> Self {
        let seed = seed.to_string();
        Self::new(move |q| {
            let speaker = q.speaker.unwrap_or("-");
            if q.wants_text {
                let pick = unit_hash(&[&seed, q.excerpt, "topic"]);
                let topic = MOCK_TOPICS[(pick * MOCK_TOPICS.len() as f64) as usize];
                return Ok(format_answer(q, &json_key(topic)));
            }
            let speaker_bias = unit_hash(&[&seed, speaker]);
            let latent = unit_hash(&[&seed, q.excerpt, speaker]);
            let body = q.prompt.rsplit_once('\n').map_or(q.prompt, |(b, _)| b);
            let noise = unit_hash(&[&seed, body, &q.open_key]);
            let raw = 0.1 + 0.3 * speaker_bias + 0.3 * latent + 0.3 * noise;
            let value = (raw * 100.0).round() / 100.0;
            let mut target = value;
            if let Some((given, g)) = q.prefilled.first() {
                let slope = 0.2 * unit_hash(&[&seed, given, &q.open_key]);
                target = ((value + slope * (g - 0.5)).clamp(0.0, 1.0) * 10_000.0).round() / 10_000.0;
            }
            Ok(format_answer(q, &target.to_string()))
        })
    }

    /// Fails the first `failures` calls with a transient error, then delegates.
    pub fn flaky(failures: usize, inner: MockProvider) -> Self {
        let seen = AtomicUsize::new(0);
        Self::new(move |q| {
            if seen.fetch_add(1, Ordering::SeqCst) < failures {
                Err(ProviderError::Transient("simulated transport failure".into()))
            } else {
                (inner.respond)(q)
            }
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let query = MockQuery::from_prompt(request.prompt);
        let text = (self.respond)(&query)?;
        Ok(Completion {
            input_tokens: Tokenizer::Approx.count(request.prompt) as u64,
            output_tokens: Tokenizer::Approx.count(&text) as u64,
            text,
            timestamp: 0,
            origin: None,
        })
    }
}

/// Serves responses recorded in session logs, keyed by cache key.
pub struct ReplayProvider {
    records: HashMap<String, SessionRecord>,
}

impl ReplayProvider {
    pub fn from_records(records: impl IntoIterator<Item = SessionRecord>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.key.clone(), r)).collect(),
        }
    }

    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut records = Vec::new();
        for p in paths {
            records.extend(super::cache::read_session(p.as_ref())?);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        let rec = self.records.get(request.key).ok_or_else(|| ProviderError::ReplayMiss {
            key: request.key.to_string(),
        })?;
        Ok(Completion {
            text: rec.response.clone(),
            input_tokens: rec.input_tokens,
            output_tokens: rec.output_tokens,
            timestamp: rec.timestamp,
            origin: Some(rec.provider.clone()),
        })
    }
}

/// OpenAI-compatible chat-completion endpoint.
pub struct LiveProvider {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_ENV: &str = "ADNSCOPE_API_KEY";

impl LiveProvider {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    /// Read the credential from `env_var`.
    pub fn from_env(base_url: &str, env_var: &str) -> Result<Self> {
        let key = std::env::var(env_var).map_err(|_| {
            Error::Provider(format!(
                "live mode needs an API key in ${env_var}; use --provider replay or mock to run offline"
            ))
        })?;
        Ok(Self::new(base_url, key, Duration::from_secs(120)))
    }
}

impl Provider for LiveProvider {
    fn id(&self) -> &str {
        "live"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        let body = ChatRequest {
            model: request.model,
            temperature: request.temperature,
            messages: [ChatMessage {
                role: "user",
                content: request.prompt,
            }],
        };
        let url = format!("{}/chat/completions", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                    ProviderError::Transient(format!("HTTP {code}"))
                }
                ureq::Error::StatusCode(code) => ProviderError::Fatal(format!("HTTP {code}")),
                other => ProviderError::Transient(other.to_string()),
            })?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transient(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transient("response without content".into()))?;
        let (input_tokens, output_tokens) = parsed
            .usage
            .map(|u| (u.prompt_tokens, u.completion_tokens))
            .unwrap_or((0, 0));
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(Completion {
            text,
            input_tokens,
            output_tokens,
            timestamp,
            origin: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(prompt: &str) -> CompletionRequest<'_> {
        CompletionRequest {
            key: "k",
            job_id: "j",
            prompt,
            model: "m",
            temperature: 0.0,
        }
    }

    #[test]
    fn constant_mock() {
        let m = MockProvider::constant(0.5);
        let c = m.complete(&request("...\n{\"score\": ")).unwrap();
        assert_eq!(c.text, "{\"score\": 0.5}");
        assert_eq!(m.calls(), 1);
    }

    #[test]
    fn linear_mock_reads_given() {
        let m = MockProvider::linear(0.4, 0.5);
        let c = m.complete(&request("x\n{\"clarity\": 0.6000, \"score\": ")).unwrap();
        assert_eq!(c.text, "{\"clarity\": 0.6, \"score\": 0.7}");
    }

    #[test]
    fn query_parsing() {
        let p = "pre\n[EXCERPT START]\nA: b\n[EXCERPT END]\n\nFocus on the speaker NIXON.\n{\"score\": ";
        let q = MockQuery::from_prompt(p);
        assert_eq!(q.speaker, Some("NIXON"));
        assert_eq!(q.open_key, "score");
        assert!(q.excerpt.contains("A: b"));
        assert!(q.prefilled.is_empty());
    }

    #[test]
    fn replay_miss_names_key() {
        let r = ReplayProvider::from_records(vec![]);
        assert_eq!(
            r.complete(&request("p")).unwrap_err(),
            ProviderError::ReplayMiss { key: "k".into() }
        );
    }

    #[test]
    fn missing_credentials() {
        let err = LiveProvider::from_env(DEFAULT_BASE_URL, "ADNSCOPE_TEST_UNSET_KEY")
            .err()
            .unwrap();
        assert_eq!(err.kind(), crate::ErrorKind::Provider);
    }
}
