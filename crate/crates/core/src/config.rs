//! TOML configuration file covering every tunable.
//!
//! ```toml
//! [pipeline]
//! q = 0.005
//! D = 0.40
//! v_xy = 0.50
//! tau = 0.05
//!
//! [optim]
//! max_iters = 2000
//!
//! [ransac]
//! iterations = 200
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::RansacConfig;
use crate::error::{Error, Result};
use crate::pointcloud::StandardizationTransform;
use crate::pseudolabeler::{FitConfig, PipelineConfig};
use crate::surfacefit::{LossConfig, ModelConfig, OptimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandardizeSection {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub ego_radius: f64,
}

impl Default for StandardizeSection {
    fn default() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            ego_radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub ransac: RansacConfig,
    pub standardize: StandardizeSection,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        self.ransac.validate()?;
        self.transform().map(|_| ())
    }

    /// Pipeline settings with the model, loss and optimizer sections folded in.
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            fit: FitConfig {
                model: self.model.clone(),
                loss: self.loss,
                optim: self.optim.clone(),
            },
            ..self.pipeline.clone()
        }
    }

    pub fn transform(&self) -> Result<StandardizationTransform> {
        let s = &self.standardize;
        StandardizationTransform::new(s.rotation, s.translation, s.ego_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let c = ConfigFile::from_toml("").unwrap();
        assert_eq!(c, ConfigFile::default());
        assert_eq!(c.pipeline(), PipelineConfig::default());
    }

    #[test]
    fn sections_merge() {
        let c = ConfigFile::from_toml(
            "[pipeline]\nD = 0.3\n[optim]\nmax_iters = 10\nseed = 7\n[model]\nhidden = [8, 8]\n[ransac]\niterations = 5\n",
        )
        .unwrap();
        let p = c.pipeline();
        assert_eq!(p.distance_threshold, 0.3);
        assert_eq!(p.fit.optim.max_iters, 10);
        assert_eq!(p.fit.optim.seed, 7);
        assert_eq!(p.fit.model.hidden, vec![8, 8]);
        assert_eq!(c.ransac.iterations, 5);
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        for text in [
            "[pipeline]\nq = 1.5\n",
            "[nope]\n",
            "[optim]\nbeta1 = 2.0\n",
            "[standardize]\nego_radius = -1.0\n",
            "[standardize]\nrotation = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]\n",
        ] {
            assert!(matches!(ConfigFile::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }
}
