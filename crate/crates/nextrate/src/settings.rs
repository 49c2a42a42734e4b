//! Optional TOML config file. Every key mirrors a command-line flag; a flag
//! given on the command line wins over the file, the file wins over the
//! built-in default.
//!
//! ```toml
//! seed = 7
//! [model]
//! width = 64
//! [train]
//! steps = 2000
//! learning_rate = 5e-4
//! [generate]
//! config = "f(6,12,24)m(1,2,4)"
//! ```

use std::path::Path;

use nextrate_core::denoiser::ModelConfig;
use nextrate_core::trainer::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::format::read_file_text;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub dataset: DatasetSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub width: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub max_t: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub warmup_steps: Option<u64>,
    pub weight_decay: Option<f64>,
    pub ema_decay: Option<f64>,
    pub window: Option<usize>,
    pub sigma_shift: Option<f64>,
    pub anchor_prob: Option<f64>,
    pub prefix_prob: Option<f64>,
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub config: Option<String>,
    pub frames: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub scenes: Option<usize>,
    pub multi_shot: Option<f64>,
    pub duration: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_file_text(path)?;
        toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }
}

/// Flag, then file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Model fields requested by flags or file, on top of `base`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelOverrides {
    pub width: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub max_t: Option<usize>,
}

impl ModelOverrides {
    pub fn merged(self, file: &ModelSection) -> Self {
        Self {
            width: self.width.or(file.width),
            layers: self.layers.or(file.layers),
            heads: self.heads.or(file.heads),
            max_t: self.max_t.or(file.max_t),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.width.is_none() && self.layers.is_none() && self.heads.is_none() && self.max_t.is_none()
    }

    pub fn apply(&self, base: ModelConfig) -> ModelConfig {
        ModelConfig {
            width: self.width.unwrap_or(base.width),
            layers: self.layers.unwrap_or(base.layers),
            heads: self.heads.unwrap_or(base.heads),
            max_t: self.max_t.unwrap_or(base.max_t),
            ..base
        }
    }
}

/// Training fields requested by flags; file values fill the gaps.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOverrides {
    pub steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub warmup_steps: Option<u64>,
    pub window: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, file: &TrainSection, mut cfg: TrainConfig) -> TrainConfig {
        cfg.steps = pick(self.steps, file.steps, cfg.steps);
        cfg.batch_size = pick(self.batch_size, file.batch_size, cfg.batch_size);
        cfg.learning_rate = pick(self.learning_rate, file.learning_rate, cfg.learning_rate);
        cfg.warmup_steps = pick(self.warmup_steps, file.warmup_steps, cfg.warmup_steps);
        cfg.window = pick(self.window, file.window, cfg.window);
        cfg.weight_decay = file.weight_decay.unwrap_or(cfg.weight_decay);
        cfg.ema_decay = file.ema_decay.unwrap_or(cfg.ema_decay);
        cfg.schedule.sigma_shift = file.sigma_shift.unwrap_or(cfg.schedule.sigma_shift);
        cfg.anchor_prob = file.anchor_prob.unwrap_or(cfg.anchor_prob);
        cfg.prefix_prob = file.prefix_prob.unwrap_or(cfg.prefix_prob);
        cfg
    }
}
