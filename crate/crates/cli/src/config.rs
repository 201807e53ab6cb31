//! The run configuration: one TOML file, every section optional.
//!
//! ```toml
//! [generator]
//! kind = "template"              # extractive | template | remote
//! knowledge = "kb.jsonl"         # optional; relative paths resolve against the events dir
//!
//! [generator.remote]
//! url = "http://localhost:8080/generate"
//!
//! [pipeline]
//! window_length = 3600
//! [pipeline.weights]
//! comment = 3.0
//! [pipeline.burst]
//! threshold = 9.0
//!
//! [run]
//! methods = ["volume_only", "volume_plus_generated", "rttp_full"]
//! window_k = 50
//!
//! [eval]
//! ks = [10, 50, 100]
//!
//! [world]     # synthetic world, see `rttp_core::simgen::WorldConfig`
//! [dpo]       # trainer, see `rttp_core::mixdpo::DpoConfig`
//! [train]
//! [trigger]
//! [paths]
//! ```
//!
//! `--set section.key=value` overrides any field after the file is read.
//! `RTTP_REMOTE_URL` overrides the remote generator endpoint and
//! `RTTP_REMOTE_TOKEN` supplies its bearer token; the token has no config
//! file key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rttp_core::eval::TriggerConfig;
use rttp_core::mixdpo::{DpoConfig, SyntheticPoolConfig};
use rttp_core::pipeline::{MethodVariant, PipelineConfig};
use rttp_core::querygen::RemoteConfig;
use rttp_core::simgen::WorldConfig;

use crate::CliError;

pub const REMOTE_URL_ENV: &str = "RTTP_REMOTE_URL";
pub const REMOTE_TOKEN_ENV: &str = "RTTP_REMOTE_TOKEN";
pub const DEFAULT_KNOWLEDGE: &str = "knowledge.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Extractive,
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Must exist when set. Unset means `knowledge.jsonl` in the events
    /// directory if present, else an empty table.
    pub knowledge: Option<PathBuf>,
    pub remote: RemoteConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Template,
            knowledge: None,
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<MethodVariant>,
    /// Candidates kept per window.
    pub window_k: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            methods: MethodVariant::ALL.to_vec(),
            window_k: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub windows_per_day: i64,
    pub recall_k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ks: vec![10, 50, 100],
            windows_per_day: 24,
            recall_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    /// Generations per post considered when building pairs.
    pub pair_k: usize,
    /// Initial logit of the top generation when starting from raw logs.
    pub init_peak: f64,
    pub synthetic: SyntheticPoolConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 500,
            pair_k: 3,
            init_peak: 3.0,
            synthetic: SyntheticPoolConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub events: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub pipeline: PipelineConfig,
    pub run: RunSection,
    pub eval: EvalSection,
    pub world: WorldConfig,
    pub dpo: DpoConfig,
    pub train: TrainSection,
    pub trigger: TriggerConfig,
    pub paths: PathsSection,
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    /// Range checks shared by every command.
    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate().map_err(config_err)?;
        self.world.validate().map_err(config_err)?;
        self.dpo.validate().map_err(config_err)?;
        self.trigger.validate().map_err(config_err)?;
        if self.run.methods.is_empty() {
            return Err(config_err("run.methods is empty"));
        }
        if self.run.window_k == 0 {
            return Err(config_err("run.window_k must be >= 1"));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(config_err("eval.ks must be non-empty and positive"));
        }
        if self.eval.windows_per_day < 1 || self.eval.recall_k == 0 {
            return Err(config_err("eval.windows_per_day and eval.recall_k must be >= 1"));
        }
        if self.train.steps == 0 || self.train.pair_k == 0 {
            return Err(config_err("train.steps and train.pair_k must be >= 1"));
        }
        if !self.train.init_peak.is_finite() {
            return Err(config_err("train.init_peak must be finite"));
        }
        Ok(())
    }

    /// Knowledge table location for a given events directory.
    pub fn knowledge_path(&self, events: &Path) -> PathBuf {
        match &self.generator.knowledge {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => events.join(p),
            None => events.join(DEFAULT_KNOWLEDGE),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad override key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the config file (or defaults), applies overrides and the
/// environment, and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| config_err(e.message()))?;
    if let Ok(url) = std::env::var(REMOTE_URL_ENV) {
        if !url.is_empty() {
            cfg.generator.remote.url = url;
        }
    }
    cfg.generator.remote.api_token = std::env::var(REMOTE_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    cfg.validate()?;
    Ok(cfg)
}
