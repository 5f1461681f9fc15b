use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use stp_core::corpus::SynthConfig;
use stp_core::PipelineConfig;

use crate::UsageError;

/// Environment variable naming a default configuration file.
pub const CONFIG_ENV: &str = "STP_CONFIG";

/// Default locations of trained models.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub patch: Option<PathBuf>,
    pub line: Option<PathBuf>,
}

/// Everything a configuration file may hold: pipeline settings at the top
/// level plus optional `[synth]` and `[models]` tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
    pub models: ModelPaths,
}

fn parse_value(path: &Path, text: &str) -> Result<serde_json::Value> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value = if is_json {
        serde_json::from_str(text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
    };
    Ok(value)
}

fn take<T: for<'de> Deserialize<'de> + Default>(
    map: &mut serde_json::Map<String, serde_json::Value>,
    key: &str,
    path: &Path,
) -> Result<T> {
    match map.remove(key) {
        Some(v) => Ok(serde_json::from_value(v)
            .map_err(|e| UsageError(format!("{}: [{key}] {e}", path.display())))?),
        None => Ok(T::default()),
    }
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut map = match parse_value(path, &text)? {
            serde_json::Value::Object(map) => map,
            _ => return Err(UsageError(format!("{}: expected a table", path.display())).into()),
        };
        let synth: SynthConfig = take(&mut map, "synth", path)?;
        let models: ModelPaths = take(&mut map, "models", path)?;
        let pipeline: PipelineConfig = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        pipeline.validate()?;
        synth.validate()?;
        Ok(CliConfig {
            pipeline,
            synth,
            models,
        })
    }

    /// The file given on the command line, else `$STP_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::from_file(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
                _ => Ok(CliConfig::default()),
            },
        }
    }

    /// A seed given on the command line drives every random stream.
    pub fn set_seed(&mut self, seed: u64) {
        self.pipeline.seed = seed;
        self.pipeline.train.seed = seed;
        self.synth.seed = seed;
    }
}
