//! Run configuration file (TOML). Every section and key is optional; unknown
//! keys are rejected. Command-line flags override values from the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::error::{FanError, Result};
use crate::evaluation::DEFAULT_IOU_MIN;
use crate::pipeline::PipelineConfig;
use crate::simulator::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_min: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_min: DEFAULT_IOU_MIN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub port: u16,
    /// Replay rate for descriptor-field directories.
    pub frame_rate: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            port: 8765,
            frame_rate: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides scene and clustering seeds when set.
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub controller: ControllerConfig,
    pub simulator: SimConfig,
    pub evaluation: EvalConfig,
    pub serve: ServeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FanError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.controller.validate()?;
        self.simulator.camera.validate()?;
        if !(0.0..=1.0).contains(&self.evaluation.iou_min) {
            return Err(FanError::Config("evaluation.iou_min must be in [0, 1]".into()));
        }
        if !(self.serve.frame_rate > 0.0) {
            return Err(FanError::Config("serve.frame_rate must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerMode;
    use crate::detection::Connectivity;
    use crate::pipeline::DetectorPath;
    use crate::redetection::RecoveryMode;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections() {
        let cfg = RunConfig::from_toml(
            r#"
seed = 4
[pipeline]
detector = "mask"
alpha = 0.5
recovery = "HUMAN"
[pipeline.detection]
connectivity = 4
[pipeline.memory]
tau = 3
[controller]
mode = "PID"
kp = 0.02
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.pipeline.detector, DetectorPath::Mask);
        assert_eq!(cfg.pipeline.alpha, Some(0.5));
        assert_eq!(cfg.pipeline.recovery, RecoveryMode::Human);
        assert_eq!(cfg.pipeline.detection.connectivity, Connectivity::Four);
        assert_eq!(cfg.pipeline.memory.tau, 3);
        assert_eq!(cfg.pipeline.memory.capacity, 64);
        assert_eq!(cfg.controller.mode, ControllerMode::Pid);
        assert_eq!(cfg.controller.kp, 0.02);
        assert_eq!(cfg.controller.ki, 0.001);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("colour = 1").is_err());
        assert!(RunConfig::from_toml("[controller]\nkq = 1.0").is_err());
        assert!(RunConfig::from_toml("[pipeline.tracker]\npatience = 2").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[controller]\nbeta = 0.0").is_err());
        assert!(RunConfig::from_toml("[pipeline.detection]\nconnectivity = 6").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        cfg.pipeline.alpha = Some(0.45);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
