//! `adnscope` command line. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 provider failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adnscope::pipeline::{Config, PairConfig, Pipeline, RunManifest};
use adnscope::survey::{cost, CostLedger, ProviderMode, DEFAULT_RATE_INPUT, DEFAULT_RATE_OUTPUT};
use adnscope::{Error, ErrorKind, Registry};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "adnscope",
    version,
    about = "Measure debate attributes with an LLM and analyse their dependency network"
)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the stage artifacts and the run manifest.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// Response source: live, replay or mock.
    #[arg(long, global = true)]
    provider: Option<ProviderMode>,
    /// Recompute stages even when the manifest says they are current.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse transcripts and their metadata.
    Ingest,
    /// Cut debates into overlapping token-budgeted slices.
    Slice(SliceArgs),
    /// Draw the slices to survey and attach contextual attributes.
    Sample(SampleArgs),
    /// Query the provider for every measured attribute.
    Measure(MeasureArgs),
    /// Correlation matrix, dependency matrix and network.
    Analyze(AnalyzeArgs),
    /// Edge stability over bootstrap resamples.
    Bootstrap(BootstrapArgs),
    /// Perturbation probes for explicit attribute pairs.
    Perturb(PerturbArgs),
    /// Render charts and the network.
    Report(ReportArgs),
    /// Run every stage in order.
    All(SeedArgs),
    /// Dollar cost of a run or of explicit token counts.
    Cost(CostArgs),
    /// Validate a registry file.
    RegistryLint(LintArgs),
    /// Registry utilities.
    Registry {
        #[command(subcommand)]
        command: RegistryCommand,
    },
}

#[derive(Subcommand, Debug)]
enum RegistryCommand {
    /// Validate a registry file.
    Lint(LintArgs),
}

#[derive(Args, Debug)]
struct SeedArgs {
    /// Seed used for every stage without its own seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SliceArgs {
    #[arg(long)]
    target_tokens: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    /// Comma-separated measured attributes.
    #[arg(long, value_delimiter = ',')]
    attributes: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Comma-separated glob patterns of attributes to leave out.
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated edge counts.
    #[arg(long, value_delimiter = ',')]
    top_n: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    /// GIVEN=TARGET attribute pair; repeatable. Replaces the configured pairs.
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<PairConfig>,
    #[arg(long)]
    max_probes: Option<usize>,
    /// Re-query the given attribute instead of reusing the stored value.
    #[arg(long)]
    remeasure: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[arg(long, requires = "output_tokens")]
    input_tokens: Option<u64>,
    #[arg(long, requires = "input_tokens")]
    output_tokens: Option<u64>,
    /// Dollars per 1000 input tokens.
    #[arg(long)]
    rate_input: Option<f64>,
    /// Dollars per 1000 output tokens.
    #[arg(long)]
    rate_output: Option<f64>,
}

#[derive(Args, Debug)]
struct LintArgs {
    /// Registry file; the bundled registry when omitted.
    path: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<PairConfig, String> {
    let (given, target) = s
        .split_once('=')
        .ok_or_else(|| format!("expected GIVEN=TARGET, got `{s}`"))?;
    if given.trim().is_empty() || target.trim().is_empty() {
        return Err(format!("expected GIVEN=TARGET, got `{s}`"));
    }
    Ok(PairConfig {
        given: given.trim().to_string(),
        target: target.trim().to_string(),
    })
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config {
            base_dir: PathBuf::from("."),
            ..Config::default()
        },
    };
    if let Some(p) = cli.provider {
        cfg.survey.provider = p;
    }
    match &cli.command {
        Command::Slice(a) => {
            set(&mut cfg.corpus.target_tokens, a.target_tokens);
            set(&mut cfg.corpus.overlap, a.overlap);
        }
        Command::Sample(a) => {
            if a.n.is_some() {
                cfg.sample.n = a.n;
            }
            if a.seed.is_some() {
                cfg.sample.seed = a.seed;
            }
        }
        Command::Measure(a) => set(&mut cfg.survey.attributes, a.attributes.clone()),
        Command::Analyze(a) => {
            set(&mut cfg.analysis.exclude, a.exclude.clone());
            set(&mut cfg.analysis.min_samples, a.min_samples);
            if a.top_n.is_some() {
                cfg.analysis.top_n = a.top_n;
            }
            if a.threshold.is_some() {
                cfg.analysis.threshold = a.threshold;
            }
        }
        Command::Bootstrap(a) => {
            set(&mut cfg.bootstrap.samples, a.samples);
            set(&mut cfg.bootstrap.top_n, a.top_n.clone());
            if a.seed.is_some() {
                cfg.bootstrap.seed = a.seed;
            }
        }
        Command::Perturb(a) => {
            if !a.pairs.is_empty() {
                cfg.perturb.pairs = a.pairs.clone();
            }
            if a.max_probes.is_some() {
                cfg.perturb.max_probes = a.max_probes;
            }
            cfg.perturb.remeasure |= a.remeasure;
        }
        Command::Report(a) => {
            if a.run_id.is_some() {
                cfg.report.run_id = a.run_id.clone();
            }
        }
        Command::All(a) => set(&mut cfg.seed, a.seed),
        _ => {}
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn stage_name(cmd: &Command) -> Option<&'static str> {
    Some(match cmd {
        Command::Ingest => "ingest",
        Command::Slice(_) => "slice",
        Command::Sample(_) => "sample",
        Command::Measure(_) => "measure",
        Command::Analyze(_) => "analyze",
        Command::Bootstrap(_) => "bootstrap",
        Command::Perturb(_) => "perturb",
        Command::Report(_) => "report",
        _ => return None,
    })
}

fn lint(path: Option<&Path>) -> Result<String, Error> {
    let mut out = String::new();
    let (registry, report) = match path {
        Some(p) => adnscope::registry::lint(p)?,
        None => Registry::from_toml(&Registry::bundled().to_toml())?,
    };
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    use adnscope::registry::Scope;
    let _ = writeln!(
        out,
        "ok: {} measured speaker attributes, {} slice attributes, {} contextual attributes",
        registry.measurement_key_count(Scope::Speaker),
        registry.measurement_key_count(Scope::Slice),
        registry.contextual_count()
    );
    Ok(out)
}

fn run_cost(cli: &Cli, a: &CostArgs) -> Result<String, Error> {
    let mut ledger = match (a.input_tokens, a.output_tokens) {
        (Some(input_tokens), Some(output_tokens)) => CostLedger {
            queries: 0,
            input_tokens,
            output_tokens,
            rate_input: DEFAULT_RATE_INPUT,
            rate_output: DEFAULT_RATE_OUTPUT,
        },
        _ => {
            RunManifest::load(&cli.run_dir)?
                .ok_or_else(|| {
                    Error::Usage(format!(
                        "no manifest in {}; pass --input-tokens and --output-tokens",
                        cli.run_dir.display()
                    ))
                })?
                .ledger
        }
    };
    set(&mut ledger.rate_input, a.rate_input);
    set(&mut ledger.rate_output, a.rate_output);
    let [i, o, t] = cost(&ledger)?.display();
    Ok(format!(
        "queries       {}\ninput tokens  {}\noutput tokens {}\ninput cost    {i}\noutput cost   {o}\ntotal         {t}\n",
        ledger.queries, ledger.input_tokens, ledger.output_tokens
    ))
}

/// Runs the command and returns its report for stdout.
fn run(cli: &Cli) -> Result<String, Error> {
    match &cli.command {
        Command::Cost(a) => return run_cost(cli, a),
        Command::RegistryLint(a)
        | Command::Registry {
            command: RegistryCommand::Lint(a),
        } => return lint(a.path.as_deref()),
        _ => {}
    }
    let cfg = load_config(cli)?;
    let mut pipeline = Pipeline::open(cfg, &cli.run_dir, cli.force)?;
    let outcomes = match stage_name(&cli.command) {
        Some(stage) => vec![pipeline.run_stage(stage)?],
        None => pipeline.run_all()?,
    };
    let mut out = String::new();
    for o in outcomes {
        let status = if o.skipped { "skipped" } else { "done" };
        let _ = writeln!(out, "[{}] {status}", o.stage);
        for m in o.messages {
            let _ = writeln!(out, "  {m}");
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(out) => {
            // A closed pipe (`| head`) is not a failure.
            let _ = std::io::stdout().lock().write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Provider => {
                    if matches!(e, Error::Provider(_)) {
                        eprintln!(
                            "hint: live mode reads the API key from the variable named by survey.api_key_env; \
                             use --provider replay or --provider mock to run offline"
                        );
                    }
                    3
                }
            };
            ExitCode::from(code)
        }
    }
}
