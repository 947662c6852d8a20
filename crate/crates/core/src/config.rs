//! Merged pipeline configuration, read from TOML. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::AggregateMode;
use crate::features::FeatureConfig;
use crate::iforest::{DayPooling, ForestParams};
use crate::ingest::Split;
use crate::preprocess::HampelSettings;
use crate::synthgen::GenConfig;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Seconds east of UTC defining local calendar days.
    pub utc_offset_seconds: i32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Drop with-step rows that have no step data instead of zero-filling.
    pub require_steps: bool,
    /// Fit z-score parameters per subject rather than on all train rows.
    pub per_subject_scaling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_trees: usize,
    pub psi: usize,
    pub day_pooling: DayPooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        ModelConfig {
            n_trees: p.n_trees,
            psi: p.psi,
            day_pooling: DayPooling::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub aggregate_mode: AggregateMode,
    /// Split whose labeled days are ranked.
    pub split: Split,
    /// Fill sleep-cell days lacking sleep rows with aligned awake scores.
    pub awake_fallback: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            aggregate_mode: AggregateMode::default(),
            split: Split::Validation,
            awake_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ingest: IngestConfig,
    pub hampel: HampelSettings,
    pub features: FeatureConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub generator: GenConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            ingest: IngestConfig::default(),
            hampel: HampelSettings::default(),
            features: FeatureConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            eval: EvalConfig::default(),
            generator: GenConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file not found: {}", path.display())),
            _ => Error::io(path, e),
        })?;
        PipelineConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    /// A seed override applies to the model and the generator alike.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            self.generator.seed = s;
        }
        self
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.model.n_trees,
            psi: self.model.psi,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.hampel.for_rate(1.0).validate()?;
        if !(self.hampel.window_seconds > 0.0) {
            return Err(Error::Config("hampel.window_seconds must be positive".into()));
        }
        if self.model.n_trees == 0 || self.model.psi < 2 {
            return Err(Error::Config("model.n_trees >= 1 and model.psi >= 2 required".into()));
        }
        if self.eval.split == Split::Train {
            return Err(Error::Config("eval.split cannot be train".into()));
        }
        self.generator.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 3\n[model]\nn_trees = 10\nday_pooling = \"max\"\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.n_trees, 10);
        assert_eq!(cfg.model.psi, 256);
        assert_eq!(cfg.model.day_pooling, DayPooling::Max);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(PipelineConfig::from_toml("sed = 3\n"), Err(Error::Config(_))));
        assert!(PipelineConfig::from_toml("[model]\ntrees = 3\n").is_err());
        assert!(PipelineConfig::from_toml("[generator.anomaly_profile]\nshift = 1\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig::from_toml("[model]\npsi = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[features]\ninterval_seconds = 7\n").is_err());
        assert!(PipelineConfig::from_toml("[eval]\nsplit = \"train\"\n").is_err());
    }

    #[test]
    fn seed_override() {
        let cfg = PipelineConfig::default().with_seed(Some(9));
        assert_eq!((cfg.seed, cfg.generator.seed), (9, 9));
    }
}
