//! Run configuration: flat `key = value` files plus command-line overrides.

use std::path::{Path, PathBuf};

use crate::fusion::FusionConfig;
use crate::model::{LossMode, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub loss_trace: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    /// Modality columns to use; empty means all columns in the manifest.
    pub modalities: Vec<String>,
    pub split: String,
    pub train: TrainConfig,
    pub fusion: FusionConfig,
    pub hidden: usize,
    pub embed_dim: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            checkpoint: None,
            loss_trace: None,
            metrics: None,
            predictions: None,
            modalities: Vec::new(),
            split: "test".into(),
            train: TrainConfig {
                loss_mode: LossMode::FramewiseCe,
                learning_rate: 0.05,
                epochs: 30,
                batch_size: 8,
                seed: 0,
                regression_weight: 1.0,
            },
            fusion: FusionConfig {
                learning_rate: 0.1,
                epochs: 30,
                batch_size: 8,
                seed: 0,
                regression_weight: 1.0,
                joint: false,
            },
            hidden: 16,
            embed_dim: 16,
            conv1_channels: 4,
            conv2_channels: 8,
        }
    }
}

pub const KEYS: [&str; 21] = [
    "manifest",
    "checkpoint",
    "loss_trace",
    "metrics",
    "predictions",
    "modalities",
    "split",
    "loss_mode",
    "learning_rate",
    "epochs",
    "batch_size",
    "seed",
    "regression_weight",
    "hidden",
    "embed_dim",
    "conv1_channels",
    "conv2_channels",
    "fusion_epochs",
    "fusion_learning_rate",
    "fusion_batch_size",
    "joint",
];

fn bad(key: &str, value: &str) -> Error {
    Error::Usage(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "manifest" => self.manifest = Some(value.into()),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "loss_trace" => self.loss_trace = Some(value.into()),
            "metrics" => self.metrics = Some(value.into()),
            "predictions" => self.predictions = Some(value.into()),
            "modalities" => {
                self.modalities = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "split" => self.split = value.into(),
            "loss_mode" => self.train.loss_mode = LossMode::parse(value).ok_or_else(|| bad(key, value))?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "seed" => {
                self.train.seed = num(key, value)?;
                self.fusion.seed = self.train.seed;
            }
            "regression_weight" => {
                self.train.regression_weight = num(key, value)?;
                self.fusion.regression_weight = self.train.regression_weight;
            }
            "hidden" => self.hidden = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "conv1_channels" => self.conv1_channels = num(key, value)?,
            "conv2_channels" => self.conv2_channels = num(key, value)?,
            "fusion_epochs" => self.fusion.epochs = num(key, value)?,
            "fusion_learning_rate" => self.fusion.learning_rate = num(key, value)?,
            "fusion_batch_size" => self.fusion.batch_size = num(key, value)?,
            "joint" => self.fusion.joint = num(key, value)?,
            _ => return Err(Error::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in a config file, in order.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.to_path_buf(), e))?;
        for (key, value) in parse_key_values(&text).map_err(|(line, msg)| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: String::new(),
            message: msg,
        })? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.fusion.learning_rate >= 0.0) || self.fusion.batch_size == 0 {
            return Err(Error::Validation(
                "fusion learning rate must be >= 0 and batch size > 0".into(),
            ));
        }
        if !(self.train.regression_weight >= 0.0) {
            return Err(Error::Validation("regression weight must be non-negative".into()));
        }
        if [self.hidden, self.embed_dim, self.conv1_channels, self.conv2_channels].contains(&0) {
            return Err(Error::Validation("layer sizes must be positive".into()));
        }
        if !["train", "validation", "test", "all"].contains(&self.split.as_str()) {
            return Err(Error::Validation(format!("unknown split {:?}", self.split)));
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment. Errors carry the line number.
pub fn parse_key_values(text: &str) -> std::result::Result<Vec<(String, String)>, (u64, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| (i as u64 + 1, format!("expected key = value, got {line:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
