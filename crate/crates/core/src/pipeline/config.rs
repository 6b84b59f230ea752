use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Tokenizer, DEFAULT_OVERLAP, DEFAULT_TARGET_TOKENS};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::survey::{
    Limits, ProviderMode, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL, DEFAULT_MODEL, DEFAULT_RATE_INPUT, DEFAULT_RATE_OUTPUT,
};

/// Run configuration. Relative paths are resolved against `base_dir`, the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Default for every seed not set explicitly.
    pub seed: u64,
    /// Custom registry file; the bundled registry when unset.
    pub registry: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub sample: SampleConfig,
    pub survey: SurveyConfig,
    pub analysis: AnalysisConfig,
    pub bootstrap: BootstrapSection,
    pub perturb: PerturbConfig,
    pub report: ReportConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Directory of `<id>.txt` transcripts with `<id>.json` metadata.
    pub transcripts: PathBuf,
    pub target_tokens: usize,
    pub overlap: f64,
    pub tokenizer: Tokenizer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Slices to sample; all slices when unset.
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    pub provider: ProviderMode,
    /// Measured attributes to survey; every measured attribute when empty.
    pub attributes: Vec<String>,
    pub model: String,
    pub temperature: f64,
    pub max_prompt_tokens: usize,
    /// Session logs served by the replay provider.
    pub replay: Vec<PathBuf>,
    pub base_url: String,
    pub api_key_env: String,
    pub rate_input: f64,
    pub rate_output: f64,
    pub limits: Limits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub min_samples: usize,
    /// Glob patterns of attributes left out of C, D and the network.
    pub exclude: Vec<String>,
    pub top_n: Option<usize>,
    /// Keeps edges with |weight| at or above it; takes precedence over `top_n`.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub samples: usize,
    pub top_n: Vec<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub given: String,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    /// Explicit (given, target) pairs; there is no all-pairs default.
    pub pairs: Vec<PairConfig>,
    /// Upper bound on probes (two queries each).
    pub max_probes: Option<usize>,
    /// Re-query the given attribute instead of reusing the stored value.
    pub remeasure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub run_id: Option<String>,
    pub scores: Vec<String>,
    pub group_by: String,
    pub focus: Vec<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            registry: None,
            corpus: CorpusConfig::default(),
            sample: SampleConfig::default(),
            survey: SurveyConfig::default(),
            analysis: AnalysisConfig::default(),
            bootstrap: BootstrapSection::default(),
            perturb: PerturbConfig::default(),
            report: ReportConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            transcripts: PathBuf::from("transcripts"),
            target_tokens: DEFAULT_TARGET_TOKENS,
            overlap: DEFAULT_OVERLAP,
            tokenizer: Tokenizer::Approx,
        }
    }
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            provider: ProviderMode::Mock,
            attributes: Vec::new(),
            model: DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_prompt_tokens: 3900,
            replay: Vec::new(),
            base_url: DEFAULT_BASE_URL.into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            rate_input: DEFAULT_RATE_INPUT,
            rate_output: DEFAULT_RATE_OUTPUT,
            limits: Limits::default(),
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            min_samples: crate::netstats::DEFAULT_MIN_SAMPLES,
            exclude: Vec::new(),
            top_n: Some(50),
            threshold: None,
        }
    }
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            samples: 2000,
            top_n: vec![10, 50, 100, 1000],
            seed: None,
        }
    }
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            run_id: None,
            scores: vec!["score".into()],
            group_by: "speaker_party".into(),
            focus: vec!["speaker_party".into(), "score".into()],
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn sample_seed(&self) -> u64 {
        self.sample.seed.unwrap_or(self.seed)
    }

    pub fn bootstrap_seed(&self) -> u64 {
        self.bootstrap.seed.unwrap_or(self.seed)
    }

    /// SHA-256 of the effective configuration (paths as written).
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.target_tokens == 0 {
            return Err(Error::Config("corpus.target_tokens must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.corpus.overlap) {
            return Err(Error::Config("corpus.overlap must be in [0, 1)".into()));
        }
        if self.bootstrap.samples == 0 {
            return Err(Error::Config("bootstrap.samples must be positive".into()));
        }
        Ok(())
    }
}
