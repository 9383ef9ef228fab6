//! Run configuration: a TOML file mirrored by CLI flags; flags override file
//! values. The fully-resolved configuration is echoed into every report.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sketchprove_core::checker::{
    Checker, CheckerConfig, IsabelleBackend, IsabelleConfig, MockOracle, WrapperConfig,
};
use sketchprove_core::dataprep::PrepConfig;
use sketchprove_core::filter::{EnvelopeMode, FilterConfig};
use sketchprove_core::model::{
    standard_few_shot, GenerationBackend, HttpBackendConfig, HttpChatBackend, PromptTemplate,
    SamplingConfig, ScriptedBackend,
};
use sketchprove_core::orchestrator::{Pipeline, PipelineConfig};
use sketchprove_core::sketch::SketchConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub pipeline: PipelineSection,
    pub whole_backend: BackendSection,
    pub step_backend: BackendSection,
    pub checker: CheckerSection,
    pub wrapper: WrapperConfig,
    pub prep: PrepConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSection {
    pub n: usize,
    pub step_n: usize,
    pub temperature: f64,
    pub step_temperature: f64,
    pub max_tokens: usize,
    pub workers: usize,
    pub check_timeout_secs: u64,
    pub refine_budget: usize,
    pub sketch_limit: usize,
    pub dedup: bool,
    pub envelope_mode: EnvelopeMode,
    pub collapse_nested: bool,
    pub few_shot: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSection {
            n: d.whole_sampling.n,
            step_n: d.step_sampling.n,
            temperature: d.whole_sampling.temperature,
            step_temperature: d.step_sampling.temperature,
            max_tokens: d.whole_sampling.max_tokens,
            workers: d.workers,
            check_timeout_secs: d.check_timeout.as_secs(),
            refine_budget: d.refine_budget,
            sketch_limit: d.sketch_limit,
            dedup: d.dedup,
            envelope_mode: EnvelopeMode::Strict,
            collapse_nested: false,
            few_shot: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Scripted: path to the line-delimited batch file.
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub api_key_env: Option<String>,
    pub request_timeout_secs: Option<u64>,
    pub max_inflight: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    HttpChat,
}

impl std::str::FromStr for BackendKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "http" | "http_chat" => Ok(BackendKind::HttpChat),
            other => bail!("unknown backend kind `{other}` (expected scripted|http_chat)"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerSection {
    pub kind: CheckerKind,
    pub pool: usize,
    pub grace_secs: u64,
    pub hammer_timeout_secs: u64,
    /// Mock: path to the oracle rules file.
    pub oracle: Option<PathBuf>,
    /// Isabelle: path to the server-info file, or explicit address parts.
    pub server_info: Option<PathBuf>,
    pub address: Option<String>,
    pub port: Option<u16>,
    pub password: Option<String>,
    pub session: String,
}

impl Default for CheckerSection {
    fn default() -> Self {
        let d = CheckerConfig::default();
        CheckerSection {
            kind: CheckerKind::Mock,
            pool: d.pool,
            grace_secs: d.grace.as_secs(),
            hammer_timeout_secs: d.hammer_timeout.as_secs(),
            oracle: None,
            server_info: None,
            address: None,
            port: None,
            password: None,
            session: "HOL".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerKind {
    #[default]
    Mock,
    Isabelle,
}

impl std::str::FromStr for CheckerKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(CheckerKind::Mock),
            "isabelle" => Ok(CheckerKind::Isabelle),
            other => bail!("unknown checker `{other}` (expected mock|isabelle)"),
        }
    }
}

/// Flag-level overrides shared by the pipeline-running subcommands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (TOML) holding the run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Whole-proof samples per theorem.
    #[arg(long)]
    pub n: Option<usize>,
    /// Sampling temperature for both models.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Checker timeout per document, in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Worker pool width.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Refinement check budget per sketch.
    #[arg(long)]
    pub refine_budget: Option<usize>,
    /// Generation backend for both models.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Scripted whole-proof batches (line-delimited).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Scripted step-model batches (line-delimited).
    #[arg(long)]
    pub step_script: Option<PathBuf>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent on the wire.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Checker backend.
    #[arg(long)]
    pub checker: Option<CheckerKind>,
    /// Mock oracle rules file (JSON).
    #[arg(long)]
    pub mock_oracle: Option<PathBuf>,
    /// Isabelle server-info file.
    #[arg(long)]
    pub server_info: Option<PathBuf>,
    /// Theory imports for wrapped documents.
    #[arg(long, value_delimiter = ',')]
    pub imports: Option<Vec<String>>,
    /// Sampling seed forwarded to backends that honor it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accept envelopes embedded in prose.
    #[arg(long)]
    pub lenient: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.n {
            self.pipeline.n = n;
        }
        if let Some(t) = o.temperature {
            self.pipeline.temperature = t;
            self.pipeline.step_temperature = t;
        }
        if let Some(t) = o.timeout {
            self.pipeline.check_timeout_secs = t;
        }
        if let Some(w) = o.workers {
            self.pipeline.workers = w;
        }
        if let Some(b) = o.refine_budget {
            self.pipeline.refine_budget = b;
        }
        if let Some(kind) = o.backend {
            self.whole_backend.kind = kind;
            self.step_backend.kind = kind;
        }
        if let Some(s) = &o.script {
            self.whole_backend.script = Some(s.clone());
        }
        if let Some(s) = &o.step_script {
            self.step_backend.script = Some(s.clone());
        }
        if let Some(e) = &o.endpoint {
            self.whole_backend.endpoint = Some(e.clone());
            self.step_backend.endpoint = Some(e.clone());
        }
        if let Some(m) = &o.model {
            self.whole_backend.model_name = Some(m.clone());
            self.step_backend.model_name = Some(m.clone());
        }
        if let Some(k) = &o.api_key_env {
            self.whole_backend.api_key_env = Some(k.clone());
            self.step_backend.api_key_env = Some(k.clone());
        }
        if let Some(c) = o.checker {
            self.checker.kind = c;
        }
        if let Some(p) = &o.mock_oracle {
            self.checker.oracle = Some(p.clone());
        }
        if let Some(p) = &o.server_info {
            self.checker.server_info = Some(p.clone());
        }
        if let Some(imports) = &o.imports {
            self.wrapper.imports = imports.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if o.lenient {
            self.pipeline.envelope_mode = EnvelopeMode::Lenient;
        }
    }

    pub fn resolved(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = RunConfig::load(path.or(overrides.config.as_deref()))?;
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        PipelineConfig {
            whole_sampling: SamplingConfig {
                temperature: p.temperature,
                n: p.n,
                max_tokens: p.max_tokens,
                stop_sequences: Vec::new(),
                seed: self.seed,
            },
            step_sampling: SamplingConfig {
                temperature: p.step_temperature,
                n: p.step_n,
                max_tokens: p.max_tokens,
                stop_sequences: Vec::new(),
                seed: self.seed,
            },
            workers: p.workers,
            check_timeout: Duration::from_secs(p.check_timeout_secs),
            refine_budget: p.refine_budget,
            sketch_limit: p.sketch_limit,
            dedup: p.dedup,
        }
    }

    pub fn build_pipeline(&self) -> Pipeline {
        let mut template = PromptTemplate::default();
        if self.pipeline.few_shot {
            template = template.with_few_shot(standard_few_shot());
        }
        let filter =
            FilterConfig { envelope_mode: self.pipeline.envelope_mode, ..FilterConfig::default() };
        Pipeline {
            cfg: self.pipeline_config(),
            template,
            wrapper: self.wrapper.clone(),
            filter,
            sketch_cfg: SketchConfig { collapse_nested: self.pipeline.collapse_nested },
        }
    }

    pub fn build_backend(&self, section: &BackendSection) -> Result<Arc<dyn GenerationBackend>> {
        match section.kind {
            BackendKind::Scripted => {
                let path = section
                    .script
                    .as_ref()
                    .context("scripted backend requires a script file (--script)")?;
                let backend = ScriptedBackend::from_jsonl_file(path)
                    .map_err(|e| anyhow::anyhow!("loading script: {e}"))?;
                Ok(Arc::new(backend))
            }
            BackendKind::HttpChat => {
                let cfg = HttpBackendConfig {
                    endpoint: section
                        .endpoint
                        .clone()
                        .context("http backend requires --endpoint")?,
                    model_name: section
                        .model_name
                        .clone()
                        .context("http backend requires --model")?,
                    api_key_env: section.api_key_env.clone(),
                    request_timeout_secs: section.request_timeout_secs.unwrap_or(120),
                    max_inflight: section.max_inflight.unwrap_or(8),
                };
                Ok(Arc::new(HttpChatBackend::new(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?))
            }
        }
    }

    pub fn build_checker(&self) -> Result<Arc<Checker>> {
        let section = &self.checker;
        let cfg = CheckerConfig {
            pool: section.pool,
            grace: Duration::from_secs(section.grace_secs),
            hammer_timeout: Duration::from_secs(section.hammer_timeout_secs),
        };
        match section.kind {
            CheckerKind::Mock => {
                let oracle = match &section.oracle {
                    Some(path) => {
                        let text = std::fs::read_to_string(path)
                            .with_context(|| format!("reading oracle {}", path.display()))?;
                        serde_json::from_str::<MockOracle>(&text)
                            .with_context(|| format!("parsing oracle {}", path.display()))?
                            .into_normalized()
                    }
                    None => MockOracle::new(),
                };
                Ok(Arc::new(Checker::new(Arc::new(oracle), cfg)))
            }
            CheckerKind::Isabelle => {
                let isabelle_cfg = match (&section.server_info, &section.address) {
                    (Some(path), _) => {
                        let text = std::fs::read_to_string(path)
                            .with_context(|| format!("reading server info {}", path.display()))?;
                        IsabelleConfig::from_server_info(&text, &section.session)
                            .map_err(|e| anyhow::anyhow!("{e}"))?
                    }
                    (None, Some(address)) => IsabelleConfig {
                        address: address.clone(),
                        port: section.port.context("isabelle checker requires port")?,
                        password: section
                            .password
                            .clone()
                            .context("isabelle checker requires password")?,
                        session: section.session.clone(),
                    },
                    (None, None) => {
                        bail!("isabelle checker requires --server-info or address/port/password")
                    }
                };
                let backend =
                    IsabelleBackend::new(isabelle_cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
                Ok(Arc::new(Checker::new(Arc::new(backend), cfg)))
            }
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
