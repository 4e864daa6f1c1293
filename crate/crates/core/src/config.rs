//! Run configuration: one TOML file covering features, scorer sizes,
//! training, tracking, metrics and the piecewise line search. Every key has
//! a default, so an empty file is a complete configuration. Unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::learning::{LineSearchConfig, TrainConfig};
use crate::metrics::MatchCriterion;
use crate::pipeline::TrackingConfig;
use crate::scoring::ScorerConfig;

/// Which labels of a KITTI file are consumed as ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub label_types: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            label_types: vec!["Car".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub scorer: ScorerConfig,
    pub train: TrainConfig,
    pub tracking: TrackingConfig,
    pub metrics: MatchCriterion,
    pub line_search: LineSearchConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The complete configuration as TOML, defaults included.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.scorer.validate()?;
        self.train.validate()?;
        self.metrics.validate()?;
        self.line_search.criterion.validate()?;
        if self.line_search.step <= 0.0 || self.line_search.min > self.line_search.max {
            return Err(Error::Config("line_search needs step > 0 and min <= max".into()));
        }
        if let Some(r) = self.tracking.gate.radius_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config("tracking.gate.radius_m must be positive".into()));
            }
        }
        if self.data.label_types.is_empty() {
            return Err(Error::Config("data.label_types must not be empty".into()));
        }
        Ok(())
    }
}
