//! Command-line orchestration: configuration, run manifests, dataset I/O,
//! and the `datagen` / `verify` / `select` / `eval` command groups.
//!
//! Every command reads/writes the JSONL schemas declared in [`rows`], writes
//! outputs atomically, and records a [`RunManifest`]. Reruns with identical
//! config, seed, and mock script produce byte-identical data artifacts (the
//! manifest carries timestamps and cache counters and is excluded from that
//! guarantee).

pub mod commands;
pub mod rows;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backend::http::API_KEY_ENV;
use crate::backend::{Backend, CachedBackend, HttpBackend, HttpConfig, MockBackend};
use crate::datagen::{NeutralLabelAs, SuccessRule};
use crate::metrics::{FlopsModel, InvalidPolicy};
use crate::util::{sha256_hex, unix_now};
use crate::verifier::{default_trigger_phrases, VerifyConfig};

/// Cache directory environment variable.
pub const CACHE_DIR_ENV: &str = "PRMKIT_CACHE_DIR";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub base_url: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            base_url: String::new(),
            timeout_secs: 600,
            retries: 3,
            backoff_ms: 250,
            max_in_flight: 8,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsSection {
    pub generator: String,
    pub verifier: String,
}

impl Default for ModelsSection {
    fn default() -> Self {
        ModelsSection {
            generator: "generator".into(),
            verifier: "verifier".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSection {
    /// Solution sampling temperature for a small instruct generator.
    pub temperature: f64,
    /// Solution sampling temperature for a 14B-class generator.
    pub temperature_large: f64,
    pub use_large_generator: bool,
    pub max_solution_tokens: u32,
    pub max_step_tokens: u32,
    pub step_delimiter: String,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            temperature: 0.8,
            temperature_large: 0.4,
            use_large_generator: false,
            max_solution_tokens: 2048,
            max_step_tokens: 256,
            step_delimiter: "\n\n".into(),
        }
    }
}

impl GenerationSection {
    pub fn effective_temperature(&self) -> f64 {
        if self.use_large_generator {
            self.temperature_large
        } else {
            self.temperature
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySection {
    pub cot_budget_tokens: u32,
    pub forced_suffix: String,
    pub yes_forms: Vec<String>,
    pub no_forms: Vec<String>,
    pub temperature: f64,
    pub parallel_temperature: f64,
    pub k: u32,
    pub r: u32,
    pub trigger_phrases: Vec<String>,
}

impl Default for VerifySection {
    fn default() -> Self {
        let d = VerifyConfig::default();
        VerifySection {
            cot_budget_tokens: d.cot_budget_tokens,
            forced_suffix: d.forced_suffix,
            yes_forms: d.yes_forms,
            no_forms: d.no_forms,
            temperature: d.temperature,
            parallel_temperature: d.parallel_temperature,
            k: d.k,
            r: d.r,
            trigger_phrases: default_trigger_phrases(),
        }
    }
}

impl VerifySection {
    pub fn to_verify_config(
        &self,
        model: &str,
        seed: Option<u64>,
        max_in_flight: usize,
    ) -> VerifyConfig {
        VerifyConfig {
            model: model.to_string(),
            cot_budget_tokens: self.cot_budget_tokens,
            forced_suffix: self.forced_suffix.clone(),
            yes_forms: self.yes_forms.clone(),
            no_forms: self.no_forms.clone(),
            temperature: self.temperature,
            parallel_temperature: self.parallel_temperature,
            k: self.k,
            r: self.r,
            trigger_phrases: self.trigger_phrases.clone(),
            seed,
            max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSection {
    pub n: u32,
    pub strategy: String,
    pub beam_n: u32,
    pub beam_m: u32,
    pub beam_max_steps: u32,
    pub beam_temperature: f64,
    pub vote_over_terminated: bool,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            n: 8,
            strategy: "weighted".into(),
            beam_n: 4,
            beam_m: 4,
            beam_max_steps: 20,
            beam_temperature: 0.6,
            vote_over_terminated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenSection {
    pub n_per_prefix: u32,
    pub temperature: f64,
    /// Filter criterion (iii): maximum chain length in tokens.
    pub max_chain_tokens: u64,
    /// Generation budget while sampling chains.
    pub sample_max_tokens: u32,
    pub balance_target: f64,
    pub balance_tolerance: f64,
    pub neutral_label_as: NeutralLabelAs,
    pub mc_rollouts: u32,
    pub mc_rule: SuccessRule,
    pub mc_temperature: f64,
}

impl Default for DatagenSection {
    fn default() -> Self {
        DatagenSection {
            n_per_prefix: 4,
            temperature: 0.1,
            max_chain_tokens: 4096,
            sample_max_tokens: 8192,
            balance_target: 0.5,
            balance_tolerance: 0.05,
            neutral_label_as: NeutralLabelAs::Correct,
            mc_rollouts: 8,
            mc_rule: SuccessRule::AnySuccess,
            mc_temperature: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub invalid_policy: InvalidPolicy,
    /// Score threshold mapping verifier values onto correct/incorrect.
    pub threshold: f64,
    /// Samples per problem for pass@1 difficulty estimation.
    pub pass_at_n: u32,
    pub n_difficulty_bins: usize,
    pub flops: FlopsModel,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            invalid_policy: InvalidPolicy::AsWrong,
            threshold: 0.5,
            pass_at_n: 32,
            n_difficulty_bins: 4,
            flops: FlopsModel::default(),
        }
    }
}

/// Effective configuration: one structured file, CLI flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub backend: BackendSection,
    pub models: ModelsSection,
    pub generation: GenerationSection,
    pub verify: VerifySection,
    pub selection: SelectionSection,
    pub datagen: DatagenSection,
    pub eval: EvalSection,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Stable hash of the parsed config; reorderings of equivalent config
    /// files hash identically. Execution knobs that cannot affect artifact
    /// content (in-flight bound, timeouts, retries, cache location) are
    /// normalized out so run ids stay stable across infrastructure settings.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.backend.max_in_flight = 0;
        semantic.backend.timeout_secs = 0;
        semantic.backend.retries = 0;
        semantic.backend.backoff_ms = 0;
        semantic.backend.cache_dir = None;
        let canonical = serde_json::to_string(&semantic).expect("config serializes");
        sha256_hex(canonical.as_bytes())
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub backend: String,
    pub requests: u64,
    pub cache_hits: u64,
    pub tokens: u64,
    pub flops_estimate: f64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn run_id(config_hash: &str, command: &str, seed: u64) -> String {
    sha256_hex(format!("{config_hash}:{command}:{seed}").as_bytes())[..12].to_string()
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// Command failures mapped onto exit codes: usage 1, I/O 2, backend 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Backend(m) => m,
        }
    }
}

impl From<crate::backend::BackendError> for CliError {
    fn from(err: crate::backend::BackendError) -> Self {
        CliError::Backend(err.to_string())
    }
}

impl From<crate::metrics::MetricsError> for CliError {
    fn from(err: crate::metrics::MetricsError) -> Self {
        match err {
            crate::metrics::MetricsError::Backend(e) => CliError::Backend(e.to_string()),
            crate::metrics::MetricsError::IoFailure(m) => CliError::Io(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<crate::verifier::VerifyError> for CliError {
    fn from(err: crate::verifier::VerifyError) -> Self {
        match err {
            crate::verifier::VerifyError::Backend(e) => CliError::Backend(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<crate::datagen::DatagenError> for CliError {
    fn from(err: crate::datagen::DatagenError) -> Self {
        match err {
            crate::datagen::DatagenError::Backend(e) => CliError::Backend(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<crate::select::SelectError> for CliError {
    fn from(err: crate::select::SelectError) -> Self {
        match err {
            crate::select::SelectError::Backend(e) => CliError::Backend(e.to_string()),
            crate::select::SelectError::Verify(e) => e.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "prmkit", version, about = "Generative PRM verification and test-time scaling")]
pub struct Cli {
    #[command(flatten)]
    pub globals: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Structured config file (TOML); flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Completions endpoint base URL.
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    /// Deterministic scripted mock backend.
    #[arg(long, global = true)]
    pub mock_script: Option<PathBuf>,
    /// Run seed; all request seeds derive from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "prmkit-out")]
    pub out: PathBuf,
    /// Bound on in-flight backend requests.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    /// Response cache directory (also PRMKIT_CACHE_DIR).
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic verification-chain pipeline.
    Datagen {
        #[command(subcommand)]
        cmd: DatagenCmd,
    },
    /// Score solutions with the verifier.
    Verify {
        #[command(subcommand)]
        cmd: VerifyCmd,
    },
    /// Test-time scaling strategies.
    Select {
        #[command(subcommand)]
        cmd: SelectCmd,
    },
    /// Metrics and reports.
    Eval {
        #[command(subcommand)]
        cmd: EvalCmd,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FilterMode {
    Process,
    Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VerifyMethod {
    Think,
    Parallel,
    Sequential,
    Judge,
}

#[derive(Debug, Subcommand)]
pub enum DatagenCmd {
    /// Sample verification chains for labeled prefixes.
    Sample {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Filter sampled chains against gold labels or answer correctness.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        prefixes: PathBuf,
        #[arg(long, value_enum, default_value = "process")]
        mode: FilterMode,
        #[arg(long)]
        max_tokens: Option<u64>,
        /// Stop after this many kept chains.
        #[arg(long)]
        target_kept: Option<usize>,
    },
    /// Rebalance final-answer correctness.
    Balance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Clean kept chains into training records.
    Finalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        prefixes: PathBuf,
    },
    /// Dataset statistics over training records.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Monte Carlo silver step labels.
    McLabel {
        #[arg(long = "in")]
        input: PathBuf,
        /// 1-based step to label; all steps when omitted.
        #[arg(long)]
        step_index: Option<usize>,
        #[arg(long)]
        rollouts: Option<u32>,
        #[arg(long, value_parser = parse_rule)]
        rule: Option<SuccessRule>,
    },
}

fn parse_rule(s: &str) -> Result<SuccessRule, String> {
    match s {
        "any" | "any_success" => Ok(SuccessRule::AnySuccess),
        "majority" => Ok(SuccessRule::Majority),
        other => Err(format!("unknown rule {other:?} (any|majority)")),
    }
}

#[derive(Debug, Subcommand)]
pub enum VerifyCmd {
    /// Score each input solution, order-preserving.
    Score {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "think")]
        method: VerifyMethod,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        rounds: Option<u32>,
        /// Judge prompt template: built-in name or file path.
        #[arg(long, default_value = "single-yes-no")]
        template: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum SelectCmd {
    /// Best-of-N selection.
    Bon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, value_enum, default_value = "think")]
        verify_method: VerifyMethod,
    },
    /// Verifier-guided beam search.
    Beam {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        beams: Option<u32>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        max_steps: Option<u32>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Solution-level verification metrics on ProcessBench-format gold data.
    Processbench {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_parser = parse_invalid_policy)]
        invalid: Option<InvalidPolicy>,
        /// Optional pass@1 rates for difficulty-binned breakdowns.
        #[arg(long)]
        pass_rates: Option<PathBuf>,
    },
    /// Aggregate (budget, metric) points into a scaling-curve report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_invalid_policy(s: &str) -> Result<InvalidPolicy, String> {
    match s {
        "wrong" | "as_wrong" => Ok(InvalidPolicy::AsWrong),
        "exclude" => Ok(InvalidPolicy::Exclude),
        other => Err(format!("unknown invalid policy {other:?} (wrong|exclude)")),
    }
}

// ---------------------------------------------------------------------------
// Context wiring and entry point
// ---------------------------------------------------------------------------

/// Everything a command needs: effective config, backend handle, output dir.
pub struct Ctx {
    pub config: Config,
    backend: Option<Box<dyn Backend>>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Ctx {
    /// Assemble a context directly; used by tests and embedding code.
    pub fn new(config: Config, backend: Option<Box<dyn Backend>>, out_dir: PathBuf) -> Self {
        Ctx {
            seed: config.seed,
            max_in_flight: config.backend.max_in_flight,
            config,
            backend,
            out_dir,
        }
    }

    /// Build a context from parsed flags. Flags override config file values.
    pub fn from_globals(globals: &GlobalOpts) -> Result<Self, CliError> {
        let mut config = match &globals.config {
            Some(path) => Config::from_file(path)?,
            None => Config::default(),
        };
        if let Some(url) = &globals.backend_url {
            config.backend.base_url = url.clone();
        }
        if let Some(seed) = globals.seed {
            config.seed = seed;
        }
        if let Some(max) = globals.max_in_flight {
            config.backend.max_in_flight = max;
        }
        let cache_dir = globals
            .cache_dir
            .clone()
            .or_else(|| std::env::var(CACHE_DIR_ENV).ok().map(PathBuf::from))
            .or_else(|| config.backend.cache_dir.clone());
        config.backend.cache_dir = cache_dir.clone();

        let inner: Option<Box<dyn Backend>> = if let Some(script) = &globals.mock_script {
            Some(Box::new(MockBackend::from_file(script, config.seed)?))
        } else if !config.backend.base_url.is_empty() {
            Some(Box::new(HttpBackend::new(HttpConfig {
                base_url: config.backend.base_url.clone(),
                api_key: std::env::var(API_KEY_ENV).ok(),
                timeout_secs: config.backend.timeout_secs,
                retries: config.backend.retries,
                backoff_ms: config.backend.backoff_ms,
                max_in_flight: config.backend.max_in_flight,
            })))
        } else {
            None
        };
        let backend = match (inner, cache_dir) {
            (Some(inner), Some(dir)) => Some(Box::new(CachedBackend::new(inner, dir)) as Box<dyn Backend>),
            (inner, _) => inner,
        };
        Ok(Ctx {
            seed: config.seed,
            max_in_flight: config.backend.max_in_flight,
            config,
            backend,
            out_dir: globals.out.clone(),
        })
    }

    /// The backend handle, or a usage error for commands that need one.
    pub fn require_backend(&self) -> Result<&dyn Backend, CliError> {
        self.backend
            .as_deref()
            .ok_or_else(|| CliError::Usage("no backend configured: pass --mock-script or --backend-url".into()))
    }

    pub fn backend_stats(&self) -> crate::backend::BackendStats {
        self.backend.as_ref().map(|b| b.stats()).unwrap_or_default()
    }

    pub fn manifest(&self, command: &str, started: u64, tokens: u64, flops: f64) -> RunManifest {
        let stats = self.backend_stats();
        let config_hash = self.config.hash();
        RunManifest {
            run_id: run_id(&config_hash, command, self.seed),
            command: command.to_string(),
            config_hash,
            seed: self.seed,
            backend: self
                .backend
                .as_ref()
                .map(|b| b.identity())
                .unwrap_or_else(|| "none".into()),
            requests: stats.requests,
            cache_hits: stats.cache_hits,
            tokens,
            flops_estimate: flops,
            started_unix: started,
            finished_unix: unix_now(),
        }
    }
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints multi-line help on its own stream; keep the
            // diagnostic single-line for scripts.
            let rendered = err.render().to_string();
            if err.use_stderr() {
                let line = rendered.lines().next().unwrap_or("invalid usage");
                eprintln!("{line}");
                return 1;
            }
            print!("{rendered}");
            return 0;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::from_globals(&cli.globals)?;
    match cli.command {
        Command::Datagen { cmd } => commands::datagen(&ctx, cmd),
        Command::Verify { cmd } => commands::verify(&ctx, cmd),
        Command::Select { cmd } => commands::select(&ctx, cmd),
        Command::Eval { cmd } => commands::eval(&ctx, cmd),
    }
}
