use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cache::{ResponseCache, SessionLog, SessionRecord};
use super::cost::CostLedger;
use super::provider::{CompletionRequest, Provider, ProviderError};
use super::{PromptJob, RawResponse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_in_flight: usize,
    /// `None` disables rate limiting.
    pub requests_per_minute: Option<u32>,
    pub retries: u32,
    /// Base delay of the exponential backoff between retries.
    pub backoff_ms: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            requests_per_minute: None,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub job_id: String,
    pub key: String,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum JobOutcome {
    Response(RawResponse),
    Failed(FailureRecord),
}

#[derive(Debug, Clone)]
pub struct ExecutionReport {
    /// One outcome per job, in job order.
    pub outcomes: Vec<JobOutcome>,
    pub provider_calls: usize,
    pub cache_hits: usize,
    /// Tokens of the responses fetched from the provider in this run.
    pub ledger: CostLedger,
}

struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(rpm: Option<u32>) -> Self {
        Self {
            interval: rpm.filter(|&r| r > 0).map(|r| Duration::from_secs_f64(60.0 / r as f64)),
            next: Mutex::new(None),
        }
    }

    fn wait(&self) {
        let Some(interval) = self.interval else { return };
        let sleep_until = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if sleep_until > now {
            std::thread::sleep(sleep_until - now);
        }
    }
}

fn record_for(
    job: &PromptJob,
    key: &str,
    provider: &str,
    text: String,
    input: u64,
    output: u64,
    ts: u64,
) -> SessionRecord {
    SessionRecord {
        key: key.to_string(),
        job_id: job.id.clone(),
        model: job.model.clone(),
        temperature: job.temperature,
        response: text,
        input_tokens: input,
        output_tokens: output,
        provider: provider.to_string(),
        timestamp: ts,
    }
}

fn response_from(job: &PromptJob, rec: &SessionRecord) -> RawResponse {
    RawResponse {
        job_id: job.id.clone(),
        key: rec.key.clone(),
        response: rec.response.clone(),
        input_tokens: rec.input_tokens,
        output_tokens: rec.output_tokens,
        provider: rec.provider.clone(),
        timestamp: rec.timestamp,
    }
}

/// Run every job through the cache and then the provider.
///
/// Successful provider answers are written to the cache immediately, so an
/// interrupted run resumes from where it stopped. Transport failures that
/// survive all retries become [`FailureRecord`]s; a replay miss aborts the run.
pub fn execute(
    jobs: &[PromptJob],
    provider: &dyn Provider,
    cache: Option<&ResponseCache>,
    session: Option<&SessionLog>,
    limits: &Limits,
    ledger_template: &CostLedger,
) -> Result<ExecutionReport> {
    let next_job = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let provider_calls = AtomicUsize::new(0);
    let cache_hits = AtomicUsize::new(0);
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let outcomes: Mutex<Vec<Option<JobOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    let ledger = Mutex::new(CostLedger {
        queries: 0,
        input_tokens: 0,
        output_tokens: 0,
        ..ledger_template.clone()
    });
    let limiter = RateLimiter::new(limits.requests_per_minute);

    let run_one = |job: &PromptJob| -> Result<JobOutcome> {
        let key = job.cache_key();
        if let Some(cache) = cache {
            if let Some(rec) = cache.get(&key)? {
                cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(JobOutcome::Response(response_from(job, &rec)));
            }
        }
        let request = CompletionRequest {
            key: &key,
            job_id: &job.id,
            prompt: &job.prompt,
            model: &job.model,
            temperature: job.temperature,
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            limiter.wait();
            provider_calls.fetch_add(1, Ordering::SeqCst);
            match provider.complete(&request) {
                Ok(c) => {
                    let rec = record_for(
                        job,
                        &key,
                        c.origin.as_deref().unwrap_or(provider.id()),
                        c.text,
                        c.input_tokens,
                        c.output_tokens,
                        c.timestamp,
                    );
                    if let Some(cache) = cache {
                        cache.put(&rec)?;
                    }
                    if let Some(log) = session {
                        log.append(&rec)?;
                    }
                    ledger
                        .lock()
                        .expect("ledger lock")
                        .record(rec.input_tokens, rec.output_tokens);
                    return Ok(JobOutcome::Response(response_from(job, &rec)));
                }
                Err(ProviderError::ReplayMiss { key }) => {
                    return Err(Error::ReplayMiss {
                        key,
                        job_id: job.id.clone(),
                    })
                }
                Err(ProviderError::Transient(_)) if attempts <= limits.retries => {
                    let delay = limits.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
                Err(ProviderError::Transient(msg)) | Err(ProviderError::Fatal(msg)) => {
                    return Ok(JobOutcome::Failed(FailureRecord {
                        job_id: job.id.clone(),
                        key,
                        attempts,
                        error: msg,
                    }))
                }
            }
        }
    };

    let workers = limits.max_in_flight.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next_job.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                match run_one(&jobs[i]) {
                    Ok(outcome) => outcomes.lock().expect("outcome lock")[i] = Some(outcome),
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().expect("error lock").get_or_insert(e);
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().expect("error lock") {
        return Err(e);
    }
    Ok(ExecutionReport {
        outcomes: outcomes
            .into_inner()
            .expect("outcome lock")
            .into_iter()
            .map(|o| o.expect("every job ran"))
            .collect(),
        provider_calls: provider_calls.into_inner(),
        cache_hits: cache_hits.into_inner(),
        ledger: ledger.into_inner().expect("ledger lock"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::{MockProvider, ReplayProvider};

    fn jobs(n: usize) -> Vec<PromptJob> {
        (0..n)
            .map(|i| PromptJob {
                id: format!("s#{i}|a|score|argue"),
                slice_id: format!("s#{i}"),
                speaker: Some("a".into()),
                attribute: "score".into(),
                measurement: "argue".into(),
                prompt: format!("excerpt {i}\n{{\"score\": "),
                model: "m".into(),
                temperature: 0.0,
            })
            .collect()
    }

    fn fast() -> Limits {
        Limits {
            max_in_flight: 4,
            requests_per_minute: None,
            retries: 3,
            backoff_ms: 0,
        }
    }

    #[test]
    fn constant_mock_three_jobs() {
        let mock = MockProvider::constant(0.5);
        let report = execute(&jobs(3), &mock, None, None, &fast(), &CostLedger::default()).unwrap();
        assert_eq!(report.outcomes.len(), 3);
        for o in &report.outcomes {
            match o {
                JobOutcome::Response(r) => assert_eq!(r.response, "{\"score\": 0.5}"),
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(report.ledger.queries, 3);
    }

    #[test]
    fn rerun_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let mock = MockProvider::constant(0.5);
        let js = jobs(5);
        let first = execute(&js, &mock, Some(&cache), None, &fast(), &CostLedger::default()).unwrap();
        assert_eq!(first.provider_calls, 5);
        let second = execute(&js, &mock, Some(&cache), None, &fast(), &CostLedger::default()).unwrap();
        assert_eq!(second.provider_calls, 0);
        assert_eq!(second.cache_hits, 5);
        assert_eq!(first.outcomes, second.outcomes);
        assert_eq!(mock.calls(), 5);
    }

    #[test]
    fn retries_then_succeeds() {
        let mock = MockProvider::flaky(2, MockProvider::constant(0.3));
        let limits = Limits {
            max_in_flight: 1,
            ..fast()
        };
        let report = execute(&jobs(1), &mock, None, None, &limits, &CostLedger::default()).unwrap();
        assert!(matches!(report.outcomes[0], JobOutcome::Response(_)));
        assert_eq!(report.provider_calls, 3);
    }

    #[test]
    fn exhausted_retries_become_failure_records() {
        let mock = MockProvider::flaky(100, MockProvider::constant(0.3));
        let limits = Limits {
            max_in_flight: 1,
            ..fast()
        };
        let report = execute(&jobs(2), &mock, None, None, &limits, &CostLedger::default()).unwrap();
        for o in &report.outcomes {
            match o {
                JobOutcome::Failed(f) => assert_eq!(f.attempts, 4),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn replay_reproduces_recording() {
        let dir = tempfile::tempdir().unwrap();
        let log = SessionLog::open(dir.path().join("session.jsonl")).unwrap();
        let js = jobs(6);
        let recorded = execute(
            &js,
            &MockProvider::synthetic(3),
            None,
            Some(&log),
            &fast(),
            &CostLedger::default(),
        )
        .unwrap();
        let replay = ReplayProvider::load(&[log.path()]).unwrap();
        let replayed = execute(&js, &replay, None, None, &fast(), &CostLedger::default()).unwrap();
        assert_eq!(recorded.outcomes, replayed.outcomes);
        assert_eq!(recorded.ledger, replayed.ledger);
    }

    #[test]
    fn replay_miss_is_an_error() {
        let replay = ReplayProvider::from_records(vec![]);
        let err = execute(&jobs(2), &replay, None, None, &fast(), &CostLedger::default()).unwrap_err();
        assert!(matches!(err, Error::ReplayMiss { .. }));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(Some(6000));
        let start = Instant::now();
        for _ in 0..4 {
            limiter.wait();
        }
        assert!(start.elapsed() >= Duration::from_millis(29));
    }
}
