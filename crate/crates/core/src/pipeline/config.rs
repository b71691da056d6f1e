//! Key-value configuration files (TOML, or JSON by `.json` extension).
//! Every key is optional; unknown keys and ill-typed values are rejected
//! with the offending key named.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datagen::VERSIONS;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, DEFAULT_CLIP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Corpus manifest file or directory.
    pub manifest: PathBuf,
    pub lr: f64,
    pub clip: f64,
    /// Detuned versions per note minibatch.
    pub versions: usize,
    /// Validate after this many source songs.
    pub validation_every: usize,
    pub max_epochs: usize,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    /// Stop once the end-of-epoch training MSE falls below this.
    pub target_train_mse: Option<f64>,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    /// Defaults to `<checkpoint_dir>/metrics.csv`.
    pub metrics: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("corpus"),
            lr: AdamConfig::default().lr,
            clip: DEFAULT_CLIP,
            versions: VERSIONS,
            validation_every: 500,
            max_epochs: 1,
            max_steps: None,
            target_train_mse: None,
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints"),
            metrics: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "key `lr`: must be positive, got {}",
                self.lr
            )));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!(
                "key `clip`: must be positive, got {}",
                self.clip
            )));
        }
        if self.versions == 0 {
            return Err(Error::Config("key `versions`: must be at least 1".into()));
        }
        if self.validation_every == 0 {
            return Err(Error::Config(
                "key `validation_every`: must be at least 1".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("key `max_epochs`: must be at least 1".into()));
        }
        if self.versions != VERSIONS {
            log::info!(
                "using {} versions per note instead of {VERSIONS}",
                self.versions
            );
        }
        Ok(())
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.metrics
            .clone()
            .unwrap_or_else(|| self.checkpoint_dir.join("metrics.csv"))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Parses key-value text in the given format into `T`, starting from
/// `T::default()`.
pub fn parse_config_str<T>(text: &str, json: bool) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let user: serde_json::Value = if json {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?
    } else {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("malformed TOML: {e}")))?;
        serde_json::to_value(table)?
    };
    let serde_json::Value::Object(user) = user else {
        return Err(Error::Config(
            "configuration must be a key-value table".into(),
        ));
    };
    let mut merged = serde_json::to_value(T::default())?;
    let obj = merged
        .as_object_mut()
        .ok_or_else(|| Error::Config("configuration type is not a table".into()))?;
    for (key, value) in user {
        if !obj.contains_key(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        obj.insert(key.clone(), value);
        serde_json::from_value::<T>(serde_json::Value::Object(obj.clone()))
            .map_err(|e| Error::Config(format!("key `{key}`: {e}")))?;
    }
    serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))
}

pub fn parse_config_file<T>(path: &Path) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_config_str(&text, json)
}
