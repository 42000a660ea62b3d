//! Motion-pattern-gated optical flow.
//!
//! A behavioral memristor array converts frame-to-frame intensity change into
//! a binary motion pattern. The pattern is distilled into rectangular regions
//! of interest that gate dense optical flow, so displacement is only computed
//! where something moved. Pattern and flow are bundled into a three-layer
//! tensor (pattern bit, horizontal velocity, vertical velocity) that drives
//! motion prediction, segmentation, and tracking.
//!
//! Module map:
//! - [`frame`], [`grid`], [`io`]: pixel containers and file formats
//! - [`sensor`]: pixel binning and voltage modulation
//! - [`memristor`]: behavioral device model and array stepping
//! - [`prefilter`]: motion pattern to regions of interest
//! - [`flow`]: dense flow backends and region gating
//! - [`tasks`]: prediction, segmentation, tracking
//! - [`metrics`]: image and detection quality measures
//! - [`synth`]: deterministic scene generation with ground truth
//! - [`config`], [`pipeline`]: end-to-end wiring and benchmarking

pub mod config;
pub mod flow;
pub mod frame;
pub mod grid;
pub mod io;
pub mod memristor;
pub mod metrics;
mod noise;
pub mod pipeline;
pub mod prefilter;
pub mod sensor;
pub mod synth;
#[cfg(test)]
mod synthutil;
pub mod tasks;

pub use config::{load_config, ConfigError, Mode, PipelineConfig};
pub use flow::{
    gated_flow, BlockMatchBackend, ExternalBackend, FarnebackBackend, FarnebackParams,
    FlowBackend, FlowError,
};
pub use frame::{FlowField, LumaFrame};
pub use grid::{BinaryImage, Grid};
pub use io::FormatError;
pub use memristor::{MemristorArray, MemristorParams, MotionPattern};
pub use metrics::{MetricsError, MetricsReport, SsimMode};
pub use pipeline::{bench_compare, run_pipeline, BenchReport, PipelineError, PipelineResult};
pub use prefilter::{PrefilterParams, RoiRect, RoiSet};
pub use sensor::{BinConfig, ModulationConfig, SensoryGrid};
pub use synth::{Scene, SceneError, SceneSpec};
pub use tasks::{NeuroFlowTensor, PolarFlow, TrackBox};
