//! Stage runner behind the command line: every stage reads its inputs from and
//! writes its artifacts to a run directory, recorded in a [`RunManifest`].

mod config;
mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use config::{
    AnalysisConfig, BootstrapSection, Config, CorpusConfig, PairConfig, PerturbConfig, ReportConfig, SampleConfig,
    SurveyConfig,
};
pub use manifest::{RunManifest, Seeds, StageRecord, MANIFEST_FILE};

use crate::corpus::{
    attach_context, parse_transcript, sample_slices, slice_debate, ContextRecord, Debate, DebateMetadata, Slice,
};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::netstats::{
    bootstrap, build_adn, dependency_matrix, pearson, AdnGraph, BootstrapConfig, CorrelationMatrix, DependencyMatrix,
    NumericTable, Prune,
};
use crate::perturb::{
    collect_results, compare_methods, influence_table, plan_perturbations, results_csv, AttributeRef, ComparisonTable,
    PerturbRequest,
};
use crate::registry::{Registry, Scope};
use crate::report::{comparison_chart, correlation_bars, render_network, score_distribution, Chart};
use crate::survey::{
    aggregate, cost, execute, parse_outcomes, plan_jobs, Cell, CostLedger, DataMatrix, ExecutionReport, JobOutcome,
    LiveProvider, MockProvider, PromptConfig, PromptJob, Provider, ProviderMode, ReplayProvider, ResponseCache,
    SessionRecord,
};

/// Stages in pipeline order.
pub const STAGES: [&str; 8] = [
    "ingest",
    "slice",
    "sample",
    "measure",
    "analyze",
    "bootstrap",
    "perturb",
    "report",
];

/// Stages whose artifacts `stage` reads directly. `report` also draws the
/// bootstrap and perturbation results when those stages are current.
fn dependencies(stage: &str) -> &'static [&'static str] {
    match stage {
        "slice" => &["ingest"],
        "sample" => &["slice"],
        "measure" => &["sample"],
        "analyze" | "bootstrap" => &["measure"],
        "perturb" | "report" => &["analyze"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: String,
    /// Up to date from an earlier run with the same configuration.
    pub skipped: bool,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleFile {
    seed: u64,
    n: usize,
    slice_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AnalysisSummary {
    text_columns: Vec<String>,
    excluded: Vec<String>,
    incomplete: Vec<String>,
    degenerate_terms: usize,
    warnings: Vec<String>,
}

/// Provider for the configured mode. Live mode needs the API key variable.
pub fn build_provider(cfg: &Config) -> Result<Box<dyn Provider>> {
    Ok(match cfg.survey.provider {
        ProviderMode::Mock => Box::new(MockProvider::synthetic(cfg.seed)),
        ProviderMode::Replay => {
            if cfg.survey.replay.is_empty() {
                return Err(Error::Config("replay mode needs survey.replay session files".into()));
            }
            let paths: Vec<PathBuf> = cfg.survey.replay.iter().map(|p| cfg.resolve(p)).collect();
            Box::new(ReplayProvider::load(&paths)?)
        }
        ProviderMode::Live => Box::new(LiveProvider::from_env(&cfg.survey.base_url, &cfg.survey.api_key_env)?),
    })
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn session_records(jobs: &[PromptJob], outcomes: &[JobOutcome]) -> Vec<SessionRecord> {
    let by_id: HashMap<&str, &PromptJob> = jobs.iter().map(|j| (j.id.as_str(), j)).collect();
    outcomes
        .iter()
        .filter_map(|o| match o {
            JobOutcome::Response(r) => {
                let job = by_id.get(r.job_id.as_str())?;
                Some(SessionRecord {
                    key: r.key.clone(),
                    job_id: r.job_id.clone(),
                    model: job.model.clone(),
                    temperature: job.temperature,
                    response: r.response.clone(),
                    input_tokens: r.input_tokens,
                    output_tokens: r.output_tokens,
                    provider: r.provider.clone(),
                    timestamp: r.timestamp,
                })
            }
            JobOutcome::Failed(_) => None,
        })
        .collect()
}

pub struct Pipeline {
    cfg: Config,
    run_dir: PathBuf,
    registry: Registry,
    registry_digest: String,
    manifest: RunManifest,
    force: bool,
    current: BTreeMap<String, String>,
    current_ledger: Option<CostLedger>,
}

impl Pipeline {
    /// Open `run_dir`, resuming its manifest. A stage stays current while its
    /// own settings and artifacts are unchanged and its inputs are current.
    pub fn open(cfg: Config, run_dir: &Path, force: bool) -> Result<Self> {
        cfg.validate()?;
        let registry = match &cfg.registry {
            Some(p) => Registry::load(&cfg.resolve(p))?,
            None => Registry::bundled(),
        };
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let digest = cfg.digest();
        let previous = RunManifest::load(run_dir)?;
        let run_id = cfg
            .report
            .run_id
            .clone()
            .or_else(|| previous.as_ref().map(|m| m.run_id.clone()))
            .unwrap_or_else(|| digest[..12].to_string());
        let manifest = RunManifest {
            run_id,
            config_digest: digest,
            registry_version: registry.version.clone(),
            provider: cfg.survey.provider,
            seeds: Seeds {
                sample: cfg.sample_seed(),
                bootstrap: cfg.bootstrap_seed(),
                mock: cfg.seed,
            },
            stages: previous.map(|m| m.stages).unwrap_or_default(),
            ledger: CostLedger {
                rate_input: cfg.survey.rate_input,
                rate_output: cfg.survey.rate_output,
                ..CostLedger::default()
            },
        };
        Ok(Self {
            registry_digest: sha256_hex(registry.to_toml().as_bytes()),
            cfg,
            run_dir: run_dir.to_path_buf(),
            registry,
            manifest,
            force,
            current: BTreeMap::new(),
            current_ledger: None,
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    /// Directory of the rendered report.
    pub fn report_dir(&self) -> PathBuf {
        self.run_dir.join("reports").join(&self.manifest.run_id)
    }

    /// Run every stage in order. `perturb` is skipped when no pairs are configured.
    pub fn run_all(&mut self) -> Result<Vec<StageOutcome>> {
        let mut out = Vec::new();
        for stage in STAGES {
            if stage == "perturb" && self.cfg.perturb.pairs.is_empty() {
                out.push(StageOutcome {
                    stage: stage.into(),
                    skipped: true,
                    messages: vec!["no perturbation pairs configured".into()],
                });
                continue;
            }
            out.push(self.run_stage(stage)?);
        }
        Ok(out)
    }

    pub fn run_stage(&mut self, stage: &str) -> Result<StageOutcome> {
        if !STAGES.contains(&stage) {
            return Err(Error::Usage(format!("unknown stage `{stage}`")));
        }
        if !self.force && self.first_stale(stage).is_none() {
            return Ok(StageOutcome {
                stage: stage.into(),
                skipped: true,
                messages: vec!["up to date".into()],
            });
        }
        self.manifest.invalidate_from(stage, &STAGES);
        self.current.clear();
        self.current_ledger = None;
        let messages = match stage {
            "ingest" => self.ingest()?,
            "slice" => self.slice()?,
            "sample" => self.sample()?,
            "measure" => self.measure()?,
            "analyze" => self.analyze()?,
            "bootstrap" => self.bootstrap()?,
            "perturb" => self.perturb()?,
            "report" => self.report()?,
            _ => unreachable!("checked above"),
        };
        let record = StageRecord {
            complete: true,
            config_digest: self.stage_digest(stage),
            artifacts: std::mem::take(&mut self.current),
            ledger: self.current_ledger.take(),
        };
        self.manifest.stages.insert(stage.to_string(), record);
        let mut total = CostLedger {
            rate_input: self.cfg.survey.rate_input,
            rate_output: self.cfg.survey.rate_output,
            ..CostLedger::default()
        };
        for rec in self.manifest.stages.values() {
            if let Some(l) = &rec.ledger {
                total = total + l.clone();
            }
        }
        self.manifest.ledger = total;
        self.manifest.save(&self.run_dir)?;
        Ok(StageOutcome {
            stage: stage.into(),
            skipped: false,
            messages,
        })
    }

    fn write(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.run_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.current.insert(rel.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    fn write_chart(&mut self, chart: &Chart) -> Result<()> {
        let prefix = format!("reports/{}", self.manifest.run_id);
        for a in &chart.artifacts {
            self.write(&format!("{prefix}/{}", a.path), &a.content)?;
        }
        Ok(())
    }

    /// Digest of the settings `stage` depends on, so unrelated edits and
    /// command-line overrides leave other stages current.
    fn stage_digest(&self, stage: &str) -> String {
        let c = &self.cfg;
        let settings = match stage {
            "ingest" => serde_json::json!([c.resolve(&c.corpus.transcripts)]),
            "slice" => serde_json::json!([c.corpus]),
            "sample" => serde_json::json!([c.sample.n, c.sample_seed(), self.registry_digest]),
            "measure" => serde_json::json!([c.survey, c.corpus.tokenizer, c.seed, self.registry_digest]),
            "analyze" => serde_json::json!([c.analysis]),
            "bootstrap" => serde_json::json!([c.analysis, c.bootstrap, c.bootstrap_seed()]),
            "perturb" => serde_json::json!([c.perturb, c.survey, c.corpus.tokenizer, c.seed, c.analysis]),
            _ => serde_json::json!([c.report, self.manifest.run_id]),
        };
        sha256_hex(settings.to_string().as_bytes())
    }

    /// Earliest stage among `stage` and its transitive dependencies that is
    /// not current.
    fn first_stale(&self, stage: &str) -> Option<&'static str> {
        if let Some(s) = dependencies(stage).iter().find_map(|d| self.first_stale(d)) {
            return Some(s);
        }
        let name = STAGES.iter().find(|s| **s == stage)?;
        (!self
            .manifest
            .is_current(stage, &self.stage_digest(stage), &self.run_dir))
        .then_some(*name)
    }

    fn read(&self, rel: &str, producer: &str) -> Result<String> {
        let path = self.run_dir.join(rel);
        if !path.exists() {
            return Err(Error::data(format!(
                "{} is missing; run `{producer}` first",
                path.display()
            )));
        }
        if let Some(stale) = self.first_stale(producer) {
            return Err(Error::data(format!("{} is stale; run `{stale}` first", path.display())));
        }
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }

    fn read_jsonl<T: DeserializeOwned>(&self, rel: &str, producer: &str) -> Result<Vec<T>> {
        self.read(rel, producer)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("{rel}: {e}"),
                })
            })
            .collect()
    }

    fn read_json<T: DeserializeOwned>(&self, rel: &str, producer: &str) -> Result<T> {
        serde_json::from_str(&self.read(rel, producer)?).map_err(|e| Error::data(format!("{rel}: {e}")))
    }

    fn prompt_config(&self) -> PromptConfig {
        PromptConfig {
            model: self.cfg.survey.model.clone(),
            temperature: self.cfg.survey.temperature,
            max_prompt_tokens: self.cfg.survey.max_prompt_tokens,
            tokenizer: self.cfg.corpus.tokenizer,
        }
    }

    fn ledger_template(&self) -> CostLedger {
        CostLedger {
            rate_input: self.cfg.survey.rate_input,
            rate_output: self.cfg.survey.rate_output,
            ..CostLedger::default()
        }
    }

    fn run_jobs(&mut self, jobs: &[PromptJob], session_rel: &str) -> Result<ExecutionReport> {
        let provider = build_provider(&self.cfg)?;
        let cache = ResponseCache::new(self.run_dir.join("cache"));
        let report = execute(
            jobs,
            provider.as_ref(),
            Some(&cache),
            None,
            &self.cfg.survey.limits,
            &self.ledger_template(),
        )?;
        // Replay runs re-serve recorded answers and leave no session log.
        if self.cfg.survey.provider != ProviderMode::Replay {
            let records = session_records(jobs, &report.outcomes);
            self.write(session_rel, &to_jsonl(&records)?)?;
        }
        // Answers served from the cache were paid for by an earlier run.
        let mut ledger = self.ledger_template();
        for o in &report.outcomes {
            if let JobOutcome::Response(r) = o {
                ledger.record(r.input_tokens, r.output_tokens);
            }
        }
        self.current_ledger = Some(ledger);
        Ok(report)
    }

    fn ingest(&mut self) -> Result<Vec<String>> {
        let dir = self.cfg.resolve(&self.cfg.corpus.transcripts);
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut transcripts: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        transcripts.sort();
        if transcripts.is_empty() {
            return Err(Error::data(format!("no .txt transcripts in {}", dir.display())));
        }
        let mut debates = Vec::new();
        let mut metas = Vec::new();
        for path in &transcripts {
            let meta_path = path.with_extension("json");
            let meta = DebateMetadata::load(&meta_path)?;
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let debate = parse_transcript(&raw, &meta).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })?;
            debates.push(debate);
            metas.push(meta);
        }
        let turns: usize = debates.iter().map(|d| d.turns.len()).sum();
        self.write("corpus/debates.jsonl", &to_jsonl(&debates)?)?;
        self.write("corpus/metadata.jsonl", &to_jsonl(&metas)?)?;
        Ok(vec![format!("{} debates, {turns} turns", debates.len())])
    }

    fn slice(&mut self) -> Result<Vec<String>> {
        let debates: Vec<Debate> = self.read_jsonl("corpus/debates.jsonl", "ingest")?;
        let c = self.cfg.corpus.clone();
        let mut slices = Vec::new();
        for d in &debates {
            slices.extend(slice_debate(d, c.target_tokens, c.overlap, c.tokenizer)?);
        }
        let oversized = slices.iter().filter(|s| s.oversized).count();
        self.write("slices/slices.jsonl", &to_jsonl(&slices)?)?;
        let mut msgs = vec![format!(
            "{} slices (target {} tokens, overlap {})",
            slices.len(),
            c.target_tokens,
            c.overlap
        )];
        if oversized > 0 {
            msgs.push(format!("{oversized} single-turn slices exceed the target"));
        }
        Ok(msgs)
    }

    fn sample(&mut self) -> Result<Vec<String>> {
        let slices: Vec<Slice> = self.read_jsonl("slices/slices.jsonl", "slice")?;
        let debates: Vec<Debate> = self.read_jsonl("corpus/debates.jsonl", "ingest")?;
        let metas: Vec<DebateMetadata> = self.read_jsonl("corpus/metadata.jsonl", "ingest")?;
        let ids: Vec<String> = slices.iter().map(|s| s.id.clone()).collect();
        let n = self.cfg.sample.n.unwrap_or(ids.len());
        let seed = self.cfg.sample_seed();
        let chosen = sample_slices(&ids, n, seed)?;
        let by_id: HashMap<&str, &Slice> = slices.iter().map(|s| (s.id.as_str(), s)).collect();
        let mut context = Vec::new();
        for id in &chosen {
            let slice = by_id[id.as_str()];
            let k = debates
                .iter()
                .position(|d| d.id == slice.debate_id)
                .ok_or_else(|| Error::data(format!("no debate {}", slice.debate_id)))?;
            context.extend(attach_context(slice, &debates[k], &metas[k])?);
        }
        let file = SampleFile {
            seed,
            n,
            slice_ids: chosen,
        };
        self.write("sample/sample.json", &(serde_json::to_string_pretty(&file)? + "\n"))?;
        self.write("sample/context.jsonl", &to_jsonl(&context)?)?;
        Ok(vec![format!(
            "{n} of {} slices sampled with seed {seed}; {} observation units",
            ids.len(),
            context.len()
        )])
    }

    fn sampled(&self) -> Result<(Vec<Slice>, Vec<ContextRecord>)> {
        let file: SampleFile = self.read_json("sample/sample.json", "sample")?;
        let slices: Vec<Slice> = self.read_jsonl("slices/slices.jsonl", "slice")?;
        let chosen: Vec<Slice> = slices.into_iter().filter(|s| file.slice_ids.contains(&s.id)).collect();
        let context = self.read_jsonl("sample/context.jsonl", "sample")?;
        Ok((chosen, context))
    }

    fn measured_attributes(&self) -> Vec<String> {
        if self.cfg.survey.attributes.is_empty() {
            self.registry
                .attributes
                .iter()
                .filter(|a| a.is_measured())
                .map(|a| a.name.clone())
                .collect()
        } else {
            self.cfg.survey.attributes.clone()
        }
    }

    fn measure(&mut self) -> Result<Vec<String>> {
        let (slices, context) = self.sampled()?;
        let attributes = self.measured_attributes();
        let jobs = plan_jobs(&slices, &context, &self.registry, &attributes, &self.prompt_config())?;
        let report = self.run_jobs(&jobs, "survey/session.jsonl")?;
        let measurements = parse_outcomes(&jobs, &report.outcomes, &self.registry)?;
        let matrix = aggregate(&measurements, &self.registry, &context)?;
        let failed = measurements.iter().filter(|m| m.value.is_none()).count();

        self.write("survey/jobs.jsonl", &to_jsonl(&jobs)?)?;
        self.write("survey/outcomes.jsonl", &to_jsonl(&report.outcomes)?)?;
        self.write("survey/measurements.jsonl", &to_jsonl(&measurements)?)?;
        self.write("survey/matrix.csv", &matrix.to_csv())?;
        self.write("survey/matrix.json", &(serde_json::to_string(&matrix)? + "\n"))?;
        self.write("survey/provenance.csv", &matrix.provenance_csv())?;
        let ledger = self.current_ledger.clone().unwrap_or_default();
        let [i, o, t] = cost(&ledger)?.display();
        Ok(vec![
            format!(
                "{} queries: {} from the provider, {} cached; {failed} without a usable value",
                jobs.len(),
                report.provider_calls,
                report.cache_hits
            ),
            format!(
                "{} x {} matrix; cost input {i}, output {o}, total {t}",
                matrix.rows(),
                matrix.columns.len()
            ),
        ])
    }

    fn analysis_table(&self) -> Result<(NumericTable, Vec<String>, Vec<String>)> {
        let matrix: DataMatrix = self.read_json("survey/matrix.json", "measure")?;
        let (table, text) = NumericTable::from_matrix(&matrix);
        let filtered = table.exclude(&self.cfg.analysis.exclude)?;
        let excluded: Vec<String> = table
            .labels
            .iter()
            .filter(|l| !filtered.labels.contains(l))
            .cloned()
            .collect();
        Ok((filtered, text, excluded))
    }

    fn prune(&self) -> Prune {
        match (self.cfg.analysis.top_n, self.cfg.analysis.threshold) {
            (_, Some(t)) => Prune::Threshold(t),
            (Some(n), None) => Prune::TopN(n),
            (None, None) => Prune::TopN(usize::MAX),
        }
    }

    fn analyze(&mut self) -> Result<Vec<String>> {
        let (table, text_columns, excluded) = self.analysis_table()?;
        let c = pearson(&table, self.cfg.analysis.min_samples)?;
        let d = dependency_matrix(&c)?;
        let adn = build_adn(&d, self.prune(), &[])?;
        let summary = AnalysisSummary {
            text_columns,
            excluded,
            incomplete: d.dropped.clone(),
            degenerate_terms: d.degenerate_terms,
            warnings: adn.warnings.clone(),
        };
        self.write("analysis/correlation.csv", &c.to_csv())?;
        self.write("analysis/dependency.csv", &d.to_csv())?;
        self.write("analysis/correlation.json", &(serde_json::to_string(&c)? + "\n"))?;
        self.write("analysis/dependency.json", &(serde_json::to_string(&d)? + "\n"))?;
        self.write("analysis/adn.json", &(adn.to_json() + "\n"))?;
        self.write(
            "analysis/summary.json",
            &(serde_json::to_string_pretty(&summary)? + "\n"),
        )?;
        let mut msgs = vec![format!(
            "{} attributes in D ({} excluded, {} dropped for incomplete correlations); {} edges",
            d.len(),
            summary.excluded.len(),
            summary.incomplete.len(),
            adn.edges.len()
        )];
        if d.degenerate_terms > 0 {
            msgs.push(format!(
                "{} degenerate partial-correlation terms counted as 0",
                d.degenerate_terms
            ));
        }
        msgs.extend(adn.warnings);
        Ok(msgs)
    }

    fn bootstrap(&mut self) -> Result<Vec<String>> {
        let (table, _, _) = self.analysis_table()?;
        let cfg = BootstrapConfig {
            samples: self.cfg.bootstrap.samples,
            top_n: self.cfg.bootstrap.top_n.clone(),
            seed: self.cfg.bootstrap_seed(),
            resample: true,
            min_samples: self.cfg.analysis.min_samples,
            parallel: true,
        };
        let report = bootstrap(&table, &cfg)?;
        self.write("bootstrap/bootstrap.csv", &report.to_csv())?;
        self.write(
            "bootstrap/bootstrap.json",
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
        let mut msgs = vec![format!(
            "B = {} ({} skipped), seed {}",
            report.samples, report.skipped, report.seed
        )];
        msgs.extend(report.to_table().lines().skip(1).map(str::to_string));
        Ok(msgs)
    }

    /// Probe requests for every configured pair and every row with a stored
    /// given value. The probe cap takes requests round-robin across pairs.
    fn perturb_requests(&mut self, matrix: &DataMatrix) -> Result<(Vec<PerturbRequest>, Vec<String>)> {
        let mut per_pair: Vec<Vec<PerturbRequest>> = Vec::new();
        let mut notes = Vec::new();
        for pair in &self.cfg.perturb.pairs {
            let given: AttributeRef = pair.given.parse()?;
            let target: AttributeRef = pair.target.parse()?;
            let spec = self.registry.require(&given.attribute)?;
            if spec.scope != Scope::Speaker {
                return Err(Error::Usage(format!("`{}` is not speaker-level", spec.name)));
            }
            let col = matrix.column_index(&given.attribute);
            let mut requests = Vec::new();
            let mut missing = 0;
            for (row, unit) in matrix.units.iter().enumerate() {
                let (Some(slice_id), Some(speaker)) = (&unit.slice_id, &unit.speaker) else {
                    continue;
                };
                let base = match col.map(|j| &matrix.cells[row][j]) {
                    Some(Cell::Number(v)) => *v,
                    _ if self.cfg.perturb.remeasure => 0.5,
                    _ => {
                        missing += 1;
                        continue;
                    }
                };
                requests.push(PerturbRequest::new(
                    slice_id,
                    speaker,
                    given.clone(),
                    target.clone(),
                    base,
                ));
            }
            if missing > 0 {
                notes.push(format!("{missing} rows without a stored `{}` skipped", given.attribute));
            }
            per_pair.push(requests);
        }
        let total: usize = per_pair.iter().map(Vec::len).sum();
        let cap = self.cfg.perturb.max_probes.unwrap_or(total).min(total);
        if cap < total {
            notes.push(format!("probe cap: {cap} of {total} probes run"));
        }
        let mut requests = Vec::with_capacity(cap);
        let mut iters: Vec<_> = per_pair.into_iter().map(Vec::into_iter).collect();
        while requests.len() < cap {
            for it in &mut iters {
                if requests.len() == cap {
                    break;
                }
                if let Some(r) = it.next() {
                    requests.push(r);
                }
            }
        }
        Ok((requests, notes))
    }

    /// Re-query each request's given attribute and use the answers as base values.
    fn remeasure(
        &mut self,
        slices: &[Slice],
        context: &[ContextRecord],
        requests: &mut [PerturbRequest],
    ) -> Result<()> {
        let mut attrs: Vec<String> = requests.iter().map(|r| r.given.attribute.clone()).collect();
        attrs.sort();
        attrs.dedup();
        let jobs = plan_jobs(slices, context, &self.registry, &attrs, &self.prompt_config())?;
        let report = self.run_jobs(&jobs, "perturb/remeasure_session.jsonl")?;
        let ms = parse_outcomes(&jobs, &report.outcomes, &self.registry)?;
        let mut values: HashMap<(String, String, String, String), f64> = HashMap::new();
        for m in ms {
            if let (Some(v), Some(sp)) = (m.value.as_ref().and_then(|v| v.as_number()), m.speaker) {
                values.insert((m.slice_id, sp, m.attribute, m.measurement), v);
            }
        }
        for r in requests.iter_mut() {
            let spec = self.registry.require(&r.given.attribute)?;
            let key = r
                .given
                .measurement
                .clone()
                .unwrap_or_else(|| spec.measurement_types[0].key.clone());
            if let Some(v) = values.get(&(r.slice_id.clone(), r.speaker.clone(), r.given.attribute.clone(), key)) {
                r.base_value = *v;
            }
        }
        Ok(())
    }

    fn perturb(&mut self) -> Result<Vec<String>> {
        if self.cfg.perturb.pairs.is_empty() {
            return Err(Error::Usage(
                "perturb needs explicit attribute pairs (perturb.pairs or --pair GIVEN=TARGET)".into(),
            ));
        }
        let matrix: DataMatrix = self.read_json("survey/matrix.json", "measure")?;
        let (slices, context) = self.sampled()?;
        let (mut requests, mut notes) = self.perturb_requests(&matrix)?;
        if self.cfg.perturb.remeasure {
            self.remeasure(&slices, &context, &mut requests)?;
        }
        let jobs = plan_perturbations(&slices, &requests, &self.registry, &self.prompt_config())?;
        let remeasure_ledger = self.current_ledger.take();
        let report = self.run_jobs(&jobs, "perturb/session.jsonl")?;
        if let (Some(a), Some(b)) = (remeasure_ledger, self.current_ledger.clone()) {
            self.current_ledger = Some(a + b);
        }
        let results = collect_results(&requests, &report.outcomes);
        self.write("perturb/results.csv", &results_csv(&results))?;
        self.write("perturb/results.jsonl", &to_jsonl(&results)?)?;

        let mut targets: Vec<&str> = results.iter().map(|r| r.target.as_str()).collect();
        targets.sort();
        targets.dedup();
        let c: Option<CorrelationMatrix> = self.read_json("analysis/correlation.json", "analyze").ok();
        let d: Option<DependencyMatrix> = self.read_json("analysis/dependency.json", "analyze").ok();
        let mut comparisons: Vec<ComparisonTable> = Vec::new();
        let mut tables = String::new();
        for target in targets {
            let table = influence_table(&results, target)?;
            notes.extend(table.notes.iter().cloned());
            tables.push_str(&table.to_csv());
            if let (Some(c), Some(d)) = (&c, &d) {
                match compare_methods(c, d, &table, target) {
                    Ok(cmp) => comparisons.push(cmp),
                    Err(e) => notes.push(format!("no comparison for `{target}`: {e}")),
                }
            }
        }
        self.write("perturb/influence.csv", &tables)?;
        self.write(
            "perturb/comparison.json",
            &(serde_json::to_string_pretty(&comparisons)? + "\n"),
        )?;
        let valid = results.iter().filter(|r| r.is_valid()).count();
        let mut msgs = vec![format!("{} probes, {valid} valid", results.len())];
        for cmp in &comparisons {
            let rc = &cmp.rank_correlations;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            msgs.push(format!(
                "{}: rank correlation ADN vs perturbation {}, correlation vs perturbation {}",
                cmp.target,
                fmt(rc.dependency_vs_influence),
                fmt(rc.correlation_vs_influence)
            ));
        }
        msgs.extend(notes);
        Ok(msgs)
    }

    fn report(&mut self) -> Result<Vec<String>> {
        let matrix: DataMatrix = self.read_json("survey/matrix.json", "measure")?;
        let c: CorrelationMatrix = self.read_json("analysis/correlation.json", "analyze")?;
        let adn = AdnGraph::from_json(&self.read("analysis/adn.json", "analyze")?)?;
        let mut notes = Vec::new();

        let rc = &self.cfg.report;
        let scores: Vec<String> = rc
            .scores
            .iter()
            .filter(|s| matrix.column_index(s).is_some())
            .cloned()
            .collect();
        let mut charts = Vec::new();
        if scores.is_empty() || matrix.column_index(&rc.group_by).is_none() {
            notes.push("score distribution skipped: score or grouping columns absent".into());
        } else {
            charts.push(score_distribution(&matrix, &scores, &rc.group_by)?);
        }
        let focus: Vec<String> = rc.focus.iter().filter(|f| c.labels.contains(f)).cloned().collect();
        if focus.is_empty() {
            notes.push("correlation bars skipped: no focus attribute in the correlation matrix".into());
        } else {
            let against: Vec<String> = c.labels.iter().filter(|l| !focus.contains(l)).cloned().collect();
            charts.push(correlation_bars(&c, &focus, &against)?);
        }
        charts.push(render_network(&adn, "adn", true)?);
        if self.first_stale("perturb").is_none() {
            let comparisons: Vec<ComparisonTable> = self.read_json("perturb/comparison.json", "perturb")?;
            for cmp in comparisons.iter().filter(|t| !t.rows.is_empty()) {
                let mut chart = comparison_chart(cmp)?;
                if comparisons.len() > 1 {
                    let name = format!("comparison_{}", cmp.target.replace(' ', "_"));
                    for a in &mut chart.artifacts {
                        a.path = a.path.replace("comparison", &name);
                    }
                }
                charts.push(chart);
            }
        }
        for chart in &charts {
            notes.extend(chart.notes.iter().cloned());
            self.write_chart(chart)?;
        }
        let prefix = format!("reports/{}", self.manifest.run_id);
        let provenance = self.read("survey/provenance.csv", "measure")?;
        self.write(&format!("{prefix}/csv/measurement_types.csv"), &provenance)?;
        if let Ok(b) = self.read("bootstrap/bootstrap.csv", "bootstrap") {
            self.write(&format!("{prefix}/csv/bootstrap.csv"), &b)?;
        }
        let mut msgs = vec![format!("{} charts in {}", charts.len(), self.report_dir().display())];
        msgs.extend(notes);
        Ok(msgs)
    }
}
