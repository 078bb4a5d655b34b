//! Run configuration: preset defaults, then the config file, then the
//! dataset-root environment variable, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dataset::adapters::{AffectNetOptions, CkPlusOptions, Fer2013Options};
use crate::dataset::Ratio;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::preprocess::PreprocessConfig;
use crate::training::TrainConfig;

/// Overrides `data.root` when set, unless `--data-root` is given.
pub const DATA_ROOT_ENV: &str = "FERKIT_DATA_ROOT";

/// File name of the resolved configuration written next to every output.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Base directory for the relative dataset paths below.
    pub root: Option<PathBuf>,
    pub affectnet: Option<PathBuf>,
    pub jaffe: Option<PathBuf>,
    pub ckplus: Option<PathBuf>,
    /// Path to the FER-2013 CSV file.
    pub fer2013: Option<PathBuf>,
    pub affectnet_options: AffectNetOptions,
    pub ckplus_options: CkPlusOptions,
    pub fer2013_options: Fer2013Options,
    /// Use generated images instead of AffectNet as the training pool.
    pub synthetic_per_class: Option<usize>,
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            affectnet: Some("AffectNet".into()),
            jaffe: Some("jaffe".into()),
            ckplus: Some("CK+".into()),
            fer2013: Some("fer2013/fer2013.csv".into()),
            affectnet_options: AffectNetOptions::default(),
            ckplus_options: CkPlusOptions::default(),
            fer2013_options: Fer2013Options::default(),
            synthetic_per_class: None,
            train_manifest: None,
            val_manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Per-class sample size; the smallest class size when absent.
    pub n: Option<usize>,
    pub seed: u64,
    /// Train fraction `split_num / split_den`.
    pub split_num: u64,
    pub split_den: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n: None,
            seed: 42,
            split_num: 8,
            split_den: 10,
        }
    }
}

impl SamplingConfig {
    pub fn ratio(&self) -> Result<Ratio> {
        Ratio::new(self.split_num, self.split_den).map_err(|e| Error::config("sampling.split_num", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub output_dir: PathBuf,
    /// Optional pretrained encoder weights.
    pub weights: Option<PathBuf>,
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub model: ModelConfig,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Complete defaults for `toy` or `full`.
    pub fn preset(name: &str) -> Result<Self> {
        let model = ModelConfig::preset(name)?;
        let (preprocess, train) = match name {
            "toy" => (PreprocessConfig::toy(), TrainConfig::toy()),
            _ => (PreprocessConfig::default(), TrainConfig::default()),
        };
        Ok(Self {
            preset: name.to_string(),
            output_dir: "runs/latest".into(),
            weights: None,
            data: DataConfig::default(),
            sampling: SamplingConfig::default(),
            model,
            preprocess,
            train,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.preprocess.validate()?;
        self.train.validate()?;
        self.sampling.ratio()?;
        let (_, h, w) = self.preprocess.output_shape();
        if (h, w) != (self.model.image_height, self.model.image_width) {
            return Err(Error::config(
                "preprocess.resize",
                format!(
                    "pipeline produces {h}x{w} images but the model expects {}x{}",
                    self.model.image_height, self.model.image_width
                ),
            ));
        }
        Ok(())
    }

    /// Resolves a dataset path under `data.root`. `key` names the config
    /// entry for error messages.
    pub fn dataset_path(&self, key: &str) -> Result<PathBuf> {
        let rel = match key {
            "affectnet" => &self.data.affectnet,
            "jaffe" => &self.data.jaffe,
            "ckplus" => &self.data.ckplus,
            "fer2013" => &self.data.fer2013,
            other => return Err(Error::config(format!("data.{other}"), "unknown dataset")),
        };
        let full_key = format!("data.{key}");
        let rel = rel.as_ref().ok_or_else(|| Error::config(&full_key, "not set"))?;
        let path = match &self.data.root {
            Some(root) if rel.is_relative() => root.join(rel),
            _ => rel.clone(),
        };
        if !path.exists() {
            return Err(Error::config(full_key, format!("{} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn train_manifest(&self) -> PathBuf {
        self.data
            .train_manifest
            .clone()
            .unwrap_or_else(|| self.output_dir.join("train.jsonl"))
    }

    pub fn val_manifest(&self) -> PathBuf {
        self.data
            .val_manifest
            .clone()
            .unwrap_or_else(|| self.output_dir.join("val.jsonl"))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<resolved>", e.to_string()))
    }

    /// Writes the resolved configuration into `output_dir`.
    pub fn save_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses a `KEY=VALUE` override. The value is read as a TOML literal when
/// possible and as a plain string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(Error::config(spec, "empty key"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("{p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Inputs to [`resolve`] besides preset defaults.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub file: Option<PathBuf>,
    /// Value of [`DATA_ROOT_ENV`], if any.
    pub env_data_root: Option<String>,
    /// `key=value` pairs from flags, applied last in order.
    pub overrides: Vec<(String, Value)>,
}

/// Builds the effective configuration.
pub fn resolve(sources: &Sources) -> Result<RunConfig> {
    let file_table = match &sources.file {
        Some(path) => read_table(path)?,
        None => Table::new(),
    };
    let mut flag_table = Table::new();
    for (k, v) in &sources.overrides {
        set_path(&mut flag_table, k, v.clone())?;
    }
    let preset = match (flag_table.get("preset"), file_table.get("preset")) {
        (Some(v), _) | (None, Some(v)) => v
            .as_str()
            .ok_or_else(|| Error::config("preset", "must be a string"))?
            .to_string(),
        (None, None) => "full".to_string(),
    };
    let defaults = RunConfig::preset(&preset)?;
    let mut table = Table::try_from(&defaults).map_err(|e| Error::config("<defaults>", e.to_string()))?;
    merge(&mut table, file_table);
    if let Some(root) = &sources.env_data_root {
        set_path(&mut table, "data.root", Value::String(root.clone()))?;
    }
    merge(&mut table, flag_table);
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| config_error(&e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_table(path: &Path) -> Result<Table> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| Error::config(format!("{}", path.display()), e.message().to_string()))
}

fn config_error(e: &toml::de::Error) -> Error {
    let msg = e.message().to_string();
    // serde reports unknown fields and type errors with the offending name in backticks
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<config>".to_string());
    Error::config(key, msg)
}
