//! Layered settings: built-in defaults, then `--config`, then environment, then flags.

use std::path::{Path, PathBuf};

use ace_core::judge::Limits;
use ace_core::synth::{ChatClient, FixtureClient, HttpChatClient, LlmConfig, Secret};
use ace_core::synth::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
use ace_core::RlConfig;
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub llm: LlmSection,
    pub limits: Limits,
    pub rl: RlConfig,
    pub parallelism: Option<usize>,
    pub fraction: Option<f64>,
}

/// The `[llm]` table. The API key is deliberately not accepted here.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub api_base: Option<String>,
    pub model: Option<String>,
    pub max_concurrency: Option<usize>,
    pub max_retries: Option<u32>,
    pub request_timeout_ms: Option<u64>,
    pub temperature: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct LlmArgs {
    /// Directory of canned responses (`<tag>.txt`, else `default.txt`) used instead of a live endpoint
    #[arg(long, value_name = "DIR")]
    pub fixture: Option<PathBuf>,
    /// Chat-completions base URL [default: https://api.openai.com/v1]
    #[arg(long, env = ENV_API_BASE)]
    pub api_base: Option<String>,
    /// Model name sent with each request [default: gpt-4o-mini]
    #[arg(long, env = ENV_MODEL)]
    pub model: Option<String>,
    /// Bearer token; prefer setting it through the environment
    #[arg(long, env = ENV_API_KEY, hide_env_values = true)]
    pub api_key: Option<String>,
    /// Maximum in-flight requests [default: 8]
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Retries per request on transport errors, 429 and 5xx [default: 3]
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Sampling temperature [default: 0.0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Per-request timeout in milliseconds [default: 120000]
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

impl LlmArgs {
    pub fn resolve(&self, cfg: &LlmSection) -> LlmConfig {
        let mut out = LlmConfig::default();
        let pick = |flag: &Option<String>, file: &Option<String>, into: &mut String| {
            if let Some(v) = flag.as_ref().or(file.as_ref()) {
                *into = v.clone();
            }
        };
        pick(&self.api_base, &cfg.api_base, &mut out.api_base);
        pick(&self.model, &cfg.model, &mut out.model_name);
        if let Some(k) = &self.api_key {
            out.api_key = Secret::new(k.clone());
        }
        if let Some(v) = self.concurrency.or(cfg.max_concurrency) {
            out.max_concurrency = v;
        }
        if let Some(v) = self.max_retries.or(cfg.max_retries) {
            out.max_retries = v;
        }
        if let Some(v) = self.temperature.or(cfg.temperature) {
            out.temperature = v;
        }
        if let Some(v) = self.timeout_ms.or(cfg.request_timeout_ms) {
            out.request_timeout_ms = v;
        }
        out
    }

    /// The client plus the settings and a label recorded as provenance.
    pub fn client(&self, cfg: &LlmSection) -> Result<(Box<dyn ChatClient>, LlmConfig, String)> {
        let llm = self.resolve(cfg);
        llm.validate()?;
        if let Some(dir) = &self.fixture {
            return Ok((Box::new(FixtureClient::new(dir)?), llm, "fixture".into()));
        }
        if llm.api_key.is_empty() {
            bail!(
                "no API key for {}: set {ENV_API_KEY} (or pass --fixture DIR to run offline)",
                llm.endpoint()
            );
        }
        let label = llm.model_name.clone();
        Ok((Box::new(HttpChatClient::new(llm.clone())?), llm, label))
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct JudgeArgs {
    /// Runner executable [default: $ACE_RUNNER, else `ace-runner` on PATH]
    #[arg(long, value_name = "PATH")]
    pub runner: Option<PathBuf>,
    /// Concurrent runner processes [default: available CPUs]
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// CPU budget per test in milliseconds [default: 5000]
    #[arg(long)]
    pub cpu_ms: Option<u64>,
    /// Wall-clock budget per test in milliseconds [default: 10000]
    #[arg(long)]
    pub wall_ms: Option<u64>,
    /// Memory cap per test in MiB [default: 512]
    #[arg(long)]
    pub mem_mb: Option<u64>,
    /// Bytes of runner output kept per stream [default: 65536]
    #[arg(long)]
    pub max_output_bytes: Option<u64>,
}

impl JudgeArgs {
    pub fn limits(&self, cfg: &PipelineConfig) -> Result<Limits> {
        let mut l = cfg.limits;
        if let Some(v) = self.cpu_ms {
            l.cpu_time_ms = v;
        }
        if let Some(v) = self.wall_ms {
            l.wall_time_ms = v;
        }
        if let Some(v) = self.mem_mb {
            l.memory_mb = v;
        }
        if let Some(v) = self.max_output_bytes {
            l.max_output_bytes = v;
        }
        l.validate()?;
        Ok(l)
    }

    pub fn parallelism(&self, cfg: &PipelineConfig) -> usize {
        self.parallelism
            .or(cfg.parallelism)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}
