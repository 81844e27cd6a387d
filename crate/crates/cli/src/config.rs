//! TOML pipeline configuration. Every field has a default, so an empty file
//! (or no file) describes the standard 256×256, 540/60/72 protocol.

use std::fmt;
use std::path::{Path, PathBuf};

use fpp_core::calibration::CalibrationModel;
use fpp_core::fringe::{FringeSpec, Orientation, DEFAULT_FREQUENCIES, DEFAULT_I0, DEFAULT_STEPS};
use fpp_core::simulator::{GroundTruthModel, SceneParams};
use fpp_core::{SplitSpec, DEFAULT_MASK_THRESHOLD};
use serde::Deserialize;

/// Bad configuration or usage; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub fringe: FringeConfig,
    pub scene: SceneParams,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub calibration: CalibrationConfig,
    pub reconstruct: ReconstructConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FringeConfig {
    pub frequencies: Vec<u32>,
    pub steps: usize,
    pub i0: f64,
    pub orientation: Orientation,
}

impl Default for FringeConfig {
    fn default() -> Self {
        Self {
            frequencies: DEFAULT_FREQUENCIES.to_vec(),
            steps: DEFAULT_STEPS,
            i0: DEFAULT_I0,
            orientation: Orientation::Vertical,
        }
    }
}

/// Ground-truth model: the built-in one unless `path` names a calibration
/// file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Heights recovered from the full stack through the measurement chain.
    Reconstructed,
    /// The simulator's analytic height field.
    Analytic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub width: usize,
    pub height: usize,
    /// Total sample count; required with ratio splits.
    pub count: Option<usize>,
    pub split: SplitSpec,
    pub out: PathBuf,
    pub keep_stacks: bool,
    pub label_source: LabelSource,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            count: None,
            split: SplitSpec::Counts {
                train: 540,
                validation: 60,
                test: 72,
            },
            out: PathBuf::from("dataset"),
            keep_stacks: false,
            label_source: LabelSource::Reconstructed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Gauge-plane heights in mm.
    pub planes: Vec<f64>,
    /// Pixel spacing of the samples taken from each plane.
    pub stride: usize,
    pub noiseless: bool,
    pub out: PathBuf,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            planes: vec![0.0, 12.5, 25.0, 37.5, 50.0],
            stride: 4,
            noiseless: false,
            out: PathBuf::from("model.json"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub threshold: f64,
    /// Gray-level modulation of a unit-albedo pixel; defaults to
    /// `scene.contrast × fringe.i0`.
    pub nominal_modulation: Option<f64>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MASK_THRESHOLD,
            nominal_modulation: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("config {}: {e}", path.display())))
    }

    pub fn fringe_spec(&self, width: usize, height: usize) -> FringeSpec {
        FringeSpec {
            frequencies: self.fringe.frequencies.clone(),
            steps: self.fringe.steps,
            i0: self.fringe.i0,
            width,
            height,
            orientation: self.fringe.orientation,
        }
    }

    pub fn nominal_modulation(&self) -> f64 {
        self.reconstruct
            .nominal_modulation
            .unwrap_or(self.scene.contrast * self.fringe.i0)
    }

    /// Per-split sample counts.
    pub fn split_counts(&self) -> anyhow::Result<[usize; 3]> {
        let n = match (self.dataset.split, self.dataset.count) {
            (SplitSpec::Counts { train, validation, test }, count) => {
                let sum = train + validation + test;
                if let Some(c) = count.filter(|&c| c != sum) {
                    return Err(config_err(format!(
                        "dataset.count: {c} disagrees with dataset.split.counts total {sum}"
                    )));
                }
                sum
            }
            (SplitSpec::Ratios { .. }, Some(c)) => c,
            (SplitSpec::Ratios { .. }, None) => {
                return Err(config_err("dataset.count: required when dataset.split uses ratios"))
            }
        };
        if n == 0 {
            return Err(config_err("dataset.count: at least one sample is required"));
        }
        self.dataset
            .split
            .counts(n)
            .map_err(|e| config_err(format!("dataset.split: {e}")))
    }

    /// Checks everything the commands rely on before any work starts.
    pub fn validate(&self) -> anyhow::Result<()> {
        let d = &self.dataset;
        if d.width < 2 || d.height < 2 {
            return Err(config_err("dataset.width/height: images must be at least 2x2"));
        }
        self.fringe_spec(d.width, d.height)
            .validate()
            .map_err(|e| config_err(format!("fringe: {e}")))?;
        self.scene.validate().map_err(|e| config_err(format!("scene: {e}")))?;
        if !(self.reconstruct.threshold > 0.0 && self.reconstruct.threshold < 1.0) {
            return Err(config_err("reconstruct.threshold: must lie in (0, 1)"));
        }
        if !(self.nominal_modulation() > 0.0) {
            return Err(config_err("reconstruct.nominal_modulation: must be positive"));
        }
        if self.calibration.stride == 0 {
            return Err(config_err("calibration.stride: must be positive"));
        }
        Ok(())
    }

    /// Ground-truth model sized for the dataset images.
    pub fn truth_model(&self) -> anyhow::Result<GroundTruthModel<f64>> {
        let (w, h) = (self.dataset.width, self.dataset.height);
        let model = match &self.model.path {
            None => GroundTruthModel::builtin(w, h)?,
            Some(p) => GroundTruthModel::new(CalibrationModel::load(p)?, w, h)?,
        };
        let (lo, hi) = model.model().depth_range;
        if self.scene.max_height_mm > hi || lo > 0.0 {
            return Err(config_err(format!(
                "scene.max_height_mm: heights [0, {}] exceed the model depth range [{lo}, {hi}]",
                self.scene.max_height_mm
            )));
        }
        Ok(model)
    }
}
