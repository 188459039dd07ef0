//! Experiment configuration: one TOML file, optionally patched by `key=value` overrides.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sonnet_core::data::CsvSchema;
use sonnet_core::metrics::SmapeKind;
use sonnet_core::trainer::{GridSpec, TrainConfig};
use sonnet_core::{Ablation, ModelConfig};

use crate::error::{usage, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub splits: Splits,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default = "default_timestamp")]
    pub timestamp: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exogenous: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_seconds: Option<i64>,
}

fn default_timestamp() -> String {
    "date".into()
}

impl DataSection {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            timestamp: self.timestamp.clone(),
            target: self.target.clone(),
            exogenous: self.exogenous.clone(),
            resample_seconds: self.resample_seconds,
        }
    }
}

/// Half-open row ranges `[start, end)`, 0-based over the loaded series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: [usize; 2],
    pub val: [usize; 2],
    pub test: Vec<Season>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Season {
    pub name: String,
    pub range: [usize; 2],
}

pub fn range(r: [usize; 2]) -> Range<usize> {
    r[0]..r[1]
}

impl Splits {
    /// Every split non-empty, and train < val < test seasons in time without overlap.
    pub fn validate(&self, rows: Option<usize>) -> CliResult<()> {
        let mut named = vec![("train", self.train), ("val", self.val)];
        if self.test.is_empty() {
            return Err(usage("splits.test needs at least one season"));
        }
        named.extend(self.test.iter().map(|s| (s.name.as_str(), s.range)));
        let mut prev: Option<(&str, usize)> = None;
        for (name, [a, b]) in named {
            if a >= b {
                return Err(usage(format!("split {name} = [{a}, {b}) is empty")));
            }
            if let Some((p, end)) = prev {
                if a < end {
                    return Err(usage(format!(
                        "split {name} starts at row {a}, before {p} ends at row {end}; splits must be disjoint and in time order"
                    )));
                }
            }
            if let Some(n) = rows.filter(|&n| b > n) {
                return Err(usage(format!("split {name} ends at row {b} but the series has {n} rows")));
            }
            prev = Some((name, b));
        }
        Ok(())
    }
}

/// Model hyperparameters; `n_exog` is taken from the data when omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seq_len: usize,
    pub horizon: usize,
    pub delay: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_exog: Option<usize>,
    pub alpha: f64,
    pub d_model: usize,
    pub n_atoms: usize,
    pub dropout: f64,
    pub ablation: Ablation,
    pub instance_norm: bool,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            seq_len: m.seq_len,
            horizon: m.horizon,
            delay: m.delay,
            n_exog: None,
            alpha: m.alpha,
            d_model: m.d_model,
            n_atoms: m.n_atoms,
            dropout: m.dropout,
            ablation: m.ablation,
            instance_norm: m.instance_norm,
            seed: m.seed,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, data_exog: usize) -> CliResult<ModelConfig> {
        if let Some(c) = self.n_exog.filter(|&c| c != data_exog) {
            return Err(usage(format!(
                "model.n_exog = {c} but the dataset has {data_exog} exogenous columns"
            )));
        }
        let cfg = ModelConfig {
            seq_len: self.seq_len,
            horizon: self.horizon,
            n_exog: data_exog,
            delay: self.delay,
            alpha: self.alpha,
            d_model: self.d_model,
            n_atoms: self.n_atoms,
            dropout: self.dropout,
            ablation: self.ablation,
            instance_norm: self.instance_norm,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub shuffle: bool,
    pub precision: Precision,
    /// Parallel grid points.
    pub workers: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            max_epochs: t.max_epochs,
            patience: t.patience,
            lr: t.lr,
            batch_size: t.batch_size,
            shuffle: t.shuffle,
            precision: Precision::default(),
            workers: 1,
        }
    }
}

impl TrainSection {
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        let t = TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            lr: self.lr,
            batch_size: self.batch_size,
            shuffle: self.shuffle,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Add last-value persistence rows to reports.
    pub persistence: bool,
    /// Add seasonal persistence rows with this period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seasonal_period: Option<usize>,
    pub smape: SmapeKind,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            persistence: true,
            seasonal_period: None,
            smape: SmapeKind::Standard,
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` after applying `overrides`; relative paths are resolved against `base`.
    pub fn parse(text: &str, overrides: &[String], base: &Path) -> CliResult<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: ExperimentConfig = doc.try_into().map_err(|e| usage(format!("config: {e}")))?;
        for p in [&mut cfg.data.path, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.splits.validate(None)?;
        cfg.train.resolve()?;
        if cfg.train.workers == 0 {
            return Err(usage("train.workers must be >= 1"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Sets a dotted key such as `train.lr=5e-4`. The value is read as a TOML
/// literal and falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("override {spec:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("override key {key:?} is malformed")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| usage(format!("override key {key:?}: {part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
