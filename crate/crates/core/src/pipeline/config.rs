//! Training configuration and the key-value config file format.
//!
//! Every field is addressable from the config file; unknown keys are
//! rejected. Defaults follow the full-scale recipe; `desk_scale()` is the
//! small preset used by the synthetic experiments.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::EncoderPairConfig;
use crate::error::{Error, Result};
use crate::labeler::UncertaintyPolicy;
use crate::loss::DEFAULT_TAU_INIT;

use super::augment::AugmentationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Soft semantic-matching targets from label similarity.
    Semantic,
    /// One-hot diagonal InfoNCE over paired batches (baseline).
    Infonce,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Semantic => f.write_str("semantic"),
            LossKind::Infonce => f.write_str("infonce"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub warmup_ratio: f64,
    pub seed: u64,
    pub image_size: usize,
    pub image_channels: usize,
    pub conv_channels: usize,
    pub embed_dim: usize,
    pub proj_dim: usize,
    pub tau_init: f64,
    pub loss: LossKind,
    pub augment: bool,
    pub augmentation: AugmentationSpec,
    /// Optional per-finding stratified batch mode for synthetic studies.
    pub stratified: bool,
    /// Reserved; reference mode is full precision and this must stay off.
    pub mixed_precision: bool,
    pub uncertainty: UncertaintyPolicy,
    pub vocab_cap: Option<usize>,
}

impl Default for TrainConfig {
    /// Full-scale defaults: lr 5e-5, batch 100, weight decay 1e-4,
    /// 10 epochs, warmup ratio 0.1, 224px inputs with the 256-to-224
    /// augmentation recipe.
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 5e-5,
            batch_size: 100,
            weight_decay: 1e-4,
            epochs: 10,
            warmup_ratio: 0.1,
            seed: 0,
            image_size: 224,
            image_channels: 1,
            conv_channels: 8,
            embed_dim: 64,
            proj_dim: 32,
            tau_init: DEFAULT_TAU_INIT,
            loss: LossKind::Semantic,
            augment: true,
            augmentation: AugmentationSpec::default(),
            stratified: false,
            mixed_precision: false,
            uncertainty: UncertaintyPolicy::Affirm,
            vocab_cap: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: 32px synthetic images and a learning rate the
    /// from-scratch toy encoders can actually use within a few hundred
    /// steps. Schedule shape (warmup ratio, decay) matches the default.
    pub fn desk_scale() -> TrainConfig {
        TrainConfig {
            learning_rate: 5e-3,
            epochs: 20,
            image_size: 32,
            augmentation: AugmentationSpec::scaled_to(32),
            ..TrainConfig::default()
        }
    }

    pub fn encoder_config(&self) -> EncoderPairConfig {
        EncoderPairConfig {
            image_channels: self.image_channels,
            image_size: self.image_size,
            conv_channels: self.conv_channels,
            embed_dim: self.embed_dim,
            proj_dim: self.proj_dim,
            tau_init: self.tau_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("tau_init", self.tau_init),
        ];
        for (name, v) in positives {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(Error::InvalidConfig(format!(
                "warmup_ratio must lie in [0,1], got {}",
                self.warmup_ratio
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.mixed_precision {
            return Err(Error::InvalidConfig(
                "mixed_precision is reserved; reference mode runs full precision".into(),
            ));
        }
        self.augmentation.validate()?;
        if self.augment && self.augmentation.crop_to != self.image_size {
            return Err(Error::InvalidConfig(format!(
                "augmentation crop_to {} must equal image_size {}",
                self.augmentation.crop_to, self.image_size
            )));
        }
        Ok(())
    }

    /// Parse the `key = value` config format. Starts from defaults;
    /// unknown keys are rejected.
    pub fn from_kv_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.apply_kv(key.trim(), value.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_kv_text(&text)
    }

    fn apply_kv(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map_err(|e| format!("bad value {value:?} for {key}: {e}"))
        }
        match key {
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "warmup_ratio" => self.warmup_ratio = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "image_size" => {
                self.image_size = parse(key, value)?;
                self.augmentation = AugmentationSpec::scaled_to(self.image_size);
            }
            "image_channels" => self.image_channels = parse(key, value)?,
            "conv_channels" => self.conv_channels = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "proj_dim" => self.proj_dim = parse(key, value)?,
            "tau_init" => self.tau_init = parse(key, value)?,
            "loss" => {
                self.loss = match value {
                    "semantic" => LossKind::Semantic,
                    "infonce" => LossKind::Infonce,
                    other => return Err(format!("unknown loss {other:?}")),
                }
            }
            "augment" => self.augment = parse_bool(key, value)?,
            "stratified" => self.stratified = parse_bool(key, value)?,
            "mixed_precision" => self.mixed_precision = parse_bool(key, value)?,
            "uncertainty" => self.uncertainty = value.parse()?,
            "vocab_cap" => {
                self.vocab_cap = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "resize_to" => self.augmentation.resize_to = parse(key, value)?,
            "crop_to" => self.augmentation.crop_to = parse(key, value)?,
            "hflip_prob" => self.augmentation.hflip_prob = parse(key, value)?,
            "jitter_min" => self.augmentation.jitter_range.0 = parse(key, value)?,
            "jitter_max" => self.augmentation.jitter_range.1 = parse(key, value)?,
            "affine_degrees_min" => self.augmentation.affine_degrees.0 = parse(key, value)?,
            "affine_degrees_max" => self.augmentation.affine_degrees.1 = parse(key, value)?,
            "max_translate" => self.augmentation.max_translate = parse(key, value)?,
            "affine_scale_min" => self.augmentation.affine_scale.0 = parse(key, value)?,
            "affine_scale_max" => self.augmentation.affine_scale.1 = parse(key, value)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(format!("bad boolean {other:?} for {key}")),
    }
}
