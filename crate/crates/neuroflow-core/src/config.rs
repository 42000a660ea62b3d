//! Run configuration: every stage's parameter group plus input and output
//! wiring, loadable from one TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    BlockMatchBackend, ExternalBackend, FarnebackBackend, FarnebackParams, FlowBackend, FlowError,
};
use crate::memristor::{MemristorError, MemristorParams};
use crate::prefilter::{PrefilterError, PrefilterParams};
use crate::sensor::{BinConfig, ModulationConfig, SensorError};

/// Which path computes flow: pattern-gated regions or the full frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Neuromorphic,
    Conventional,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Neuromorphic => "neuromorphic",
            Mode::Conventional => "conventional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowBackendKind {
    #[default]
    Farneback,
    Blockmatch,
    External,
}

/// Backend selector plus the parameter table for each choice. Only the
/// selected table is used; `external` has no defaults, so it must be present
/// when selected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub backend: FlowBackendKind,
    pub farneback: FarnebackParams,
    pub blockmatch: BlockMatchBackend,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalBackend>,
}

impl FlowConfig {
    pub fn build(&self) -> Result<Box<dyn FlowBackend>, ConfigError> {
        match self.backend {
            FlowBackendKind::Farneback => {
                self.farneback.validate()?;
                Ok(Box::new(FarnebackBackend { params: self.farneback }))
            }
            FlowBackendKind::Blockmatch => {
                let bm = self.blockmatch;
                if bm.block < 3 {
                    return Err(ConfigError::Invalid {
                        what: format!("blockmatch block edge {} is below 3", bm.block),
                    });
                }
                if bm.search_radius < 1 {
                    return Err(ConfigError::Invalid {
                        what: "blockmatch search radius must be at least 1".into(),
                    });
                }
                Ok(Box::new(bm))
            }
            FlowBackendKind::External => match &self.external {
                Some(ext) => Ok(Box::new(ext.clone())),
                None => Err(ConfigError::MissingExternal),
            },
        }
    }
}

/// Knobs for the downstream tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    /// Lanczos taps per side in prediction warps.
    pub lanczos_n: usize,
    /// HSV value channel threshold for segmentation.
    pub v_thresh: u8,
    /// Flow magnitude mapped to full HSV value.
    pub mag_ref: f64,
    /// Square opening kernel edge for segmentation cleanup.
    pub kernel: usize,
    /// Smallest connected component kept as a detection, px.
    pub min_area: usize,
    /// IoU at or above which a lower-scoring box is suppressed.
    pub nms_iou: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            lanczos_n: 3,
            v_thresh: 25,
            mag_ref: 8.0,
            kernel: 3,
            min_area: 16,
            nms_iou: 0.5,
        }
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lanczos_n == 0 {
            return Err(ConfigError::Invalid { what: "lanczos_n must be at least 1".into() });
        }
        if !self.mag_ref.is_finite() || self.mag_ref <= 0.0 {
            return Err(ConfigError::Invalid { what: "mag_ref must be finite and positive".into() });
        }
        if self.kernel == 0 {
            return Err(ConfigError::Invalid { what: "kernel must be at least 1".into() });
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(ConfigError::Invalid { what: "nms_iou must be in (0, 1]".into() });
        }
        Ok(())
    }
}

/// Ground-truth locations for scoring a run. Paths are relative to the
/// config's input directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masks_dir: Option<PathBuf>,
    pub mask_pattern: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<PathBuf>,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        GroundTruthConfig { masks_dir: None, mask_pattern: "m*.pgm".into(), boxes: None }
    }
}

/// One run, end to end: where frames come from, which path processes them,
/// every stage's parameters, and optionally where artifacts go and which
/// ground truth scores them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub input_dir: PathBuf,
    /// Frame file pattern with one `*`; an optional directory prefix is
    /// resolved under `input_dir`.
    pub frame_pattern: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub bin: BinConfig,
    pub modulation: ModulationConfig,
    pub memristor: MemristorParams,
    pub prefilter: PrefilterParams,
    pub flow: FlowConfig,
    pub tasks: TaskParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::default(),
            input_dir: PathBuf::from("."),
            frame_pattern: "frames/f*.pgm".into(),
            output_dir: None,
            bin: BinConfig::default(),
            modulation: ModulationConfig::default(),
            memristor: MemristorParams::default(),
            prefilter: PrefilterParams::default(),
            flow: FlowConfig::default(),
            tasks: TaskParams::default(),
            ground_truth: None,
        }
    }
}

impl PipelineConfig {
    /// Checks every parameter group; the frame-dimension invariants are
    /// checked against the actual frames when a run starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bin.validate()?;
        self.modulation.validate()?;
        self.memristor.validate()?;
        self.prefilter.validate()?;
        self.flow.build()?;
        self.tasks.validate()?;
        if self.frame_pattern.matches('*').count() != 1 {
            return Err(ConfigError::Invalid {
                what: format!("frame_pattern {:?} must contain exactly one '*'", self.frame_pattern),
            });
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.to_path_buf(), source: e })?;
    let config: PipelineConfig = toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), source: e })?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("flow backend \"external\" needs a [flow.external] table")]
    MissingExternal,
    #[error("invalid config: {what}")]
    Invalid { what: String },
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Memristor(#[from] MemristorError),
    #[error(transparent)]
    Prefilter(#[from] PrefilterError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
