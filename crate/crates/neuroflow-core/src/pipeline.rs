//! End-to-end runner: frames through binning, the memristor array, region
//! extraction, gated flow, and the downstream tasks, with per-stage wall
//! times and optional scoring against ground truth. Also the gated-vs-dense
//! benchmark harness.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, GroundTruthConfig, Mode, PipelineConfig};
use crate::flow::{gated_flow, FlowError};
use crate::frame::LumaFrame;
use crate::grid::BinaryImage;
use crate::io::{self, FormatError};
use crate::memristor::{MemristorArray, MemristorError, MotionPattern};
use crate::metrics::{self, MetricsError, MetricsReport, SsimMode};
use crate::prefilter::{pattern_to_rois, PrefilterError, RoiRect, RoiSet};
use crate::synth::{frame_to_mask, mask_to_frame};
use crate::tasks::{
    assemble_tensor, detect_boxes, nms_boxes, segment_mask, warp_predict, NeuroFlowTensor,
    TaskError, TrackBox,
};

/// Everything produced for one frame pair. The flow convention anchors
/// results at the pair's first frame: the tensor's flow displaces
/// `prev_index` content toward `curr_index`, the mask and boxes outline the
/// object where it stood at `prev_index`, and `predicted` is the
/// reconstruction of frame `curr_index` from frame `prev_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutputs {
    pub prev_index: usize,
    pub curr_index: usize,
    /// Pattern at array resolution; all ones in conventional mode.
    pub pattern: MotionPattern,
    pub rois: RoiSet,
    pub tensor: NeuroFlowTensor,
    pub predicted: LumaFrame,
    pub mask: BinaryImage,
    pub boxes: Vec<TrackBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    /// One entry per consecutive frame pair, in order; the first frame alone
    /// produces nothing.
    pub outputs: Vec<FrameOutputs>,
    pub report: MetricsReport,
}

/// Ground truth for scoring, indexed by frame. Segmentation and tracking
/// outputs for a pair are compared at the pair's first frame.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub masks: Option<Vec<BinaryImage>>,
    pub boxes: Option<Vec<Vec<RoiRect>>>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("need at least 2 frames, got {count}")]
    TooFewFrames { count: usize },
    #[error("{w}x{h} frames do not bin into {n}x{m} units")]
    BadDimensions { w: usize, h: usize, m: usize, n: usize },
    #[error("ground truth: {what}")]
    GroundTruth { what: String },
    #[error("benchmark needs at least 3 repetitions, got {reps}")]
    TooFewReps { reps: usize },
    #[error("frame {frame}: {source}")]
    Memristor {
        frame: usize,
        #[source]
        source: MemristorError,
    },
    #[error("frame {frame}: {source}")]
    Prefilter {
        frame: usize,
        #[source]
        source: PrefilterError,
    },
    #[error("frame {frame}: {source}")]
    Flow {
        frame: usize,
        #[source]
        source: FlowError,
    },
    #[error("frame {frame}: {source}")]
    Task {
        frame: usize,
        #[source]
        source: TaskError,
    },
}

/// Runs the configured pipeline over frames already in memory. Stage wall
/// times accumulate into the report under "memristor", "prefilter", "flow",
/// "predict", "segment", and "track"; conventional mode skips the first two
/// stages and uses one full-frame region instead.
pub fn run_on_frames(
    frames: &[LumaFrame],
    config: &PipelineConfig,
    gt: Option<&GroundTruth>,
) -> Result<PipelineResult, PipelineError> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(PipelineError::TooFewFrames { count: frames.len() });
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    let (m, n) = (config.bin.m, config.bin.n);
    if w % n != 0 || h % m != 0 || w == 0 || h == 0 {
        return Err(PipelineError::BadDimensions { w, h, m, n });
    }
    if let Some(gt) = gt {
        if let Some(masks) = &gt.masks {
            if masks.len() != frames.len() {
                return Err(PipelineError::GroundTruth {
                    what: format!("{} masks for {} frames", masks.len(), frames.len()),
                });
            }
        }
        if let Some(boxes) = &gt.boxes {
            if boxes.len() < frames.len() {
                return Err(PipelineError::GroundTruth {
                    what: format!("boxes cover {} frames of {}", boxes.len(), frames.len()),
                });
            }
        }
    }

    let backend = config.flow.build()?;
    let grid_rows = h / m;
    let grid_cols = w / n;
    let mut array = MemristorArray::new(grid_rows, grid_cols, config.memristor);
    let full_frame = RoiRect::new(0, 0, w, h);
    let all_ones = BinaryImage::from_vec(grid_rows, grid_cols, vec![1; grid_rows * grid_cols]);

    let mut outputs = Vec::with_capacity(frames.len() - 1);
    let mut report = MetricsReport::default();
    let mut timer = StageTimer::default();

    for curr_index in 1..frames.len() {
        let prev_index = curr_index - 1;
        let prev = &frames[prev_index];
        let curr = &frames[curr_index];

        let (pattern, rois) = match config.mode {
            Mode::Neuromorphic => {
                let t = Instant::now();
                let pattern = array
                    .step_frame(prev, curr, &config.bin, &config.modulation)
                    .map_err(|source| PipelineError::Memristor { frame: curr_index, source })?;
                timer.add("memristor", t);

                let t = Instant::now();
                let rois = pattern_to_rois(&pattern, &config.bin, (w, h), &config.prefilter)
                    .map_err(|source| PipelineError::Prefilter { frame: curr_index, source })?;
                timer.add("prefilter", t);
                (pattern, rois)
            }
            Mode::Conventional => (all_ones.clone(), vec![full_frame]),
        };

        let t = Instant::now();
        let flow = match config.mode {
            Mode::Neuromorphic => gated_flow(prev, curr, &rois, backend.as_ref()),
            Mode::Conventional => backend.compute(prev, curr),
        }
        .map_err(|source| PipelineError::Flow { frame: curr_index, source })?;
        timer.add("flow", t);

        let tensor = assemble_tensor(&pattern, &config.bin, flow)
            .map_err(|source| PipelineError::Task { frame: curr_index, source })?;

        let t = Instant::now();
        let predicted = warp_predict(prev, &tensor, config.tasks.lanczos_n);
        timer.add("predict", t);

        let t = Instant::now();
        let mask = segment_mask(
            &tensor,
            &rois,
            config.tasks.v_thresh,
            config.tasks.kernel,
            config.tasks.mag_ref,
        );
        timer.add("segment", t);

        let t = Instant::now();
        let detections = detect_boxes(&mask, tensor.flow(), config.tasks.min_area);
        let boxes = nms_boxes(&detections, config.tasks.nms_iou);
        timer.add("track", t);

        report.ssim.push(metrics::ssim(&predicted, curr, SsimMode::Windowed)?);
        if let Some(gt_masks) = gt.and_then(|g| g.masks.as_ref()) {
            report.pa.push(metrics::pixel_accuracy(&mask, &gt_masks[prev_index])?);
        }
        if let Some(gt_boxes) = gt.and_then(|g| g.boxes.as_ref()) {
            if !gt_boxes[prev_index].is_empty() {
                report.mean_iou.push(metrics::mean_box_iou(&boxes, &gt_boxes[prev_index])?);
            }
        }

        outputs.push(FrameOutputs {
            prev_index,
            curr_index,
            pattern,
            rois,
            tensor,
            predicted,
            mask,
            boxes,
        });
    }

    report.stage_seconds = timer.seconds;
    Ok(PipelineResult { outputs, report })
}

#[derive(Default)]
struct StageTimer {
    seconds: BTreeMap<String, f64>,
}

impl StageTimer {
    fn add(&mut self, stage: &str, since: Instant) {
        *self.seconds.entry(stage.to_string()).or_insert(0.0) += since.elapsed().as_secs_f64();
    }
}

/// Loads the ground truth a config points at, resolving relative paths
/// against the input directory.
pub fn load_ground_truth(
    input_dir: &Path,
    gt: &GroundTruthConfig,
) -> Result<GroundTruth, PipelineError> {
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            input_dir.join(p)
        }
    };
    let masks = match &gt.masks_dir {
        Some(dir) => {
            let frames = io::load_sequence(resolve(dir), &gt.mask_pattern)?;
            Some(frames.iter().map(frame_to_mask).collect())
        }
        None => None,
    };
    let boxes = match &gt.boxes {
        Some(path) => {
            let flat = io::read_gt_boxes(resolve(path))?;
            let count = flat.iter().map(|&(frame, _)| frame + 1).max().unwrap_or(0);
            let mut grouped = vec![Vec::new(); count];
            for (frame, rect) in flat {
                grouped[frame].push(rect);
            }
            Some(grouped)
        }
        None => None,
    };
    Ok(GroundTruth { masks, boxes })
}

/// Splits an optional directory prefix off a frame pattern, so
/// "frames/f*.pgm" under an input directory reads `input/frames`.
fn sequence_source(input_dir: &Path, pattern: &str) -> (std::path::PathBuf, String) {
    match pattern.rsplit_once('/') {
        Some((sub, name)) => (input_dir.join(sub), name.to_string()),
        None => (input_dir.to_path_buf(), pattern.to_string()),
    }
}

/// Loads the input sequence, runs the pipeline, and writes artifacts to the
/// output directory when one is configured.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult, PipelineError> {
    config.validate()?;
    let (frames_dir, pattern) = sequence_source(&config.input_dir, &config.frame_pattern);
    let frames = io::load_sequence(frames_dir, &pattern)?;
    let gt = match &config.ground_truth {
        Some(gt_cfg) => Some(load_ground_truth(&config.input_dir, gt_cfg)?),
        None => None,
    };
    let result = run_on_frames(&frames, config, gt.as_ref())?;
    if let Some(out) = &config.output_dir {
        write_outputs(&result, out)?;
    }
    Ok(result)
}

/// Writes a run's artifacts, all named by the pair's first frame index:
/// `flow/NNNN.flo`, `pred/pNNNN.pgm` (reconstruction of frame NNNN+1),
/// `masks/mNNNN.pgm`, `rois/NNNN.txt`, `boxes/NNNN.txt`, and `report.toml`.
pub fn write_outputs(result: &PipelineResult, dir: impl AsRef<Path>) -> Result<(), FormatError> {
    let dir = dir.as_ref();
    let flow_dir = dir.join("flow");
    let pred_dir = dir.join("pred");
    let masks_dir = dir.join("masks");
    let rois_dir = dir.join("rois");
    let boxes_dir = dir.join("boxes");
    for d in [&flow_dir, &pred_dir, &masks_dir, &rois_dir, &boxes_dir] {
        fs::create_dir_all(d).map_err(|e| FormatError::Io { path: d.clone(), source: e })?;
    }
    for out in &result.outputs {
        let k = out.prev_index;
        io::write_flo(out.tensor.flow(), flow_dir.join(format!("{k:04}.flo")))?;
        io::write_pgm(&out.predicted, pred_dir.join(format!("p{k:04}.pgm")))?;
        io::write_pgm(&mask_to_frame(&out.mask), masks_dir.join(format!("m{k:04}.pgm")))?;
        io::write_rois(&out.rois, rois_dir.join(format!("{k:04}.txt")))?;
        io::write_track_boxes(&out.boxes, boxes_dir.join(format!("{k:04}.txt")))?;
    }
    let report = toml::to_string(&result.report).expect("report serializes");
    let path = dir.join("report.toml");
    fs::write(&path, report).map_err(|e| FormatError::Io { path, source: e })
}

/// One line of the benchmark comparison: a task's accuracy and its stage's
/// median wall time under one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub task: String,
    pub mode: Mode,
    /// Mean metric over the sequence: SSIM for predict, pixel accuracy for
    /// segment, mean box IoU for track. Absent without ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Median cumulative stage seconds across repetitions.
    pub stage_seconds: f64,
}

/// Gated-vs-dense comparison over one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Median flow-stage seconds keyed by mode name.
    pub flow_seconds: BTreeMap<String, f64>,
    /// Dense flow time over gated flow time.
    pub speedup: f64,
}

/// Runs both modes `reps` times over the configured sequence and reports
/// per-task accuracy with median stage times. Outputs are deterministic per
/// mode, so accuracy comes from the first repetition; timing medians come
/// from all of them. Nothing is written to disk.
pub fn bench_compare(config: &PipelineConfig, reps: usize) -> Result<BenchReport, PipelineError> {
    if reps < 3 {
        return Err(PipelineError::TooFewReps { reps });
    }
    config.validate()?;
    let (frames_dir, pattern) = sequence_source(&config.input_dir, &config.frame_pattern);
    let frames = io::load_sequence(frames_dir, &pattern)?;
    let gt = match &config.ground_truth {
        Some(gt_cfg) => Some(load_ground_truth(&config.input_dir, gt_cfg)?),
        None => None,
    };

    let mut rows = Vec::new();
    let mut flow_seconds = BTreeMap::new();
    for mode in [Mode::Neuromorphic, Mode::Conventional] {
        let mut mode_config = config.clone();
        mode_config.mode = mode;
        mode_config.output_dir = None;

        let mut first_report: Option<MetricsReport> = None;
        let mut stage_samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for _ in 0..reps {
            let result = run_on_frames(&frames, &mode_config, gt.as_ref())?;
            for (stage, &secs) in &result.report.stage_seconds {
                stage_samples.entry(stage.clone()).or_default().push(secs);
            }
            first_report.get_or_insert(result.report);
        }
        let report = first_report.expect("reps >= 3");
        let medians: BTreeMap<&str, f64> = stage_samples
            .iter()
            .map(|(stage, samples)| (stage.as_str(), median(samples)))
            .collect();

        flow_seconds.insert(mode.as_str().to_string(), medians["flow"]);
        for (task, scores) in
            [("predict", &report.ssim), ("segment", &report.pa), ("track", &report.mean_iou)]
        {
            rows.push(BenchRow {
                task: task.to_string(),
                mode,
                score: mean(scores),
                stage_seconds: medians[task],
            });
        }
    }

    let speedup = flow_seconds[Mode::Conventional.as_str()]
        / flow_seconds[Mode::Neuromorphic.as_str()];
    Ok(BenchReport { rows, flow_seconds, speedup })
}

fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("stage times are finite"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<f64>() / xs.len() as f64)
}
