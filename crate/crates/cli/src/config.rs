//! Run configuration: a TOML file with one table per command, overridden by
//! `TWEETACT_<SECTION>_<KEY>` environment variables, overridden in turn by
//! command-line settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use tweetact_core::data::SynthConfig;
use tweetact_core::{Architecture, Features, ModelSpec};

pub const ENV_PREFIX: &str = "TWEETACT_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareSection {
    pub input: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub history_len: usize,
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
}

impl Default for PrepareSection {
    fn default() -> Self {
        Self {
            input: None,
            rules: None,
            history_len: 5,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Directory written by `prepare`.
    pub data: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_count: usize,
    pub embeddings: Option<PathBuf>,
    /// Overrides the prepared class weights when non-empty.
    pub class_weights: Vec<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            data: None,
            epochs: 10,
            batch_size: 100,
            lr: 1e-3,
            min_count: 1,
            embeddings: None,
            class_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub model: Option<PathBuf>,
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    /// Architecture names, or `all`.
    pub architectures: Vec<String>,
    pub instances: u64,
    pub tol: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            architectures: vec!["all".into()],
            instances: 20,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub prepare: PrepareSection,
    /// Absent unless configured; `eval` and `predict` then check it
    /// against the checkpoint.
    pub model: Option<ModelSpec>,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub predict: PredictSection,
    pub profile: ProfileSection,
    pub gradcheck: GradcheckSection,
    pub synth: SynthConfig,
}

/// Parses a scalar the way TOML would, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set(table: &mut Table, section: &str, key: &str, raw: &str) -> Result<()> {
    if section.is_empty() || key.is_empty() {
        bail!("setting {section:?}.{key:?} needs a section and a key");
    }
    let mut value = parse_value(raw);
    if section == "model" {
        if let Value::String(s) = &value {
            match key {
                "features" => value = Value::try_from(s.parse::<Features>()?)?,
                "architecture" => value = Value::String(s.parse::<Architecture>()?.name().to_string()),
                _ => {}
            }
        }
    }
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => bail!("config entry {section:?} is not a table"),
    }
}

impl RunConfig {
    /// Layers the file, the environment and `section.key=value` overrides.
    pub fn load<I>(file: Option<&Path>, env: I, overrides: &[String]) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match file {
            Some(p) => std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?
                .parse::<Table>()
                .with_context(|| format!("parsing config {}", p.display()))?,
            None => Table::new(),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        env.sort();
        for (k, v) in env {
            let rest = k[ENV_PREFIX.len()..].to_ascii_lowercase();
            let (section, key) = rest
                .split_once('_')
                .with_context(|| format!("environment variable {k} needs a section and a key"))?;
            set(&mut table, section, key, &v).with_context(|| format!("environment variable {k}"))?;
        }
        for o in overrides {
            let (path, v) = o
                .split_once('=')
                .with_context(|| format!("setting {o:?} is not of the form section.key=value"))?;
            let (section, key) = path
                .split_once('.')
                .with_context(|| format!("setting {o:?} is not of the form section.key=value"))?;
            set(&mut table, section.trim(), key.trim(), v.trim())?;
        }
        let cfg: RunConfig = Value::Table(table).try_into().context("invalid configuration")?;
        Ok(cfg)
    }

    /// The configured model spec, or the default one, seeded by the run.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            seed: self.run.seed,
            ..self.model.clone().unwrap_or_default()
        }
    }
}
