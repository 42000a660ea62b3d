//! Dense displacement estimation behind a pluggable backend contract, plus
//! region gating that restricts computation to regions of interest.

mod blockmatch;
mod external;
mod farneback;

pub use blockmatch::{block_match_flow, BlockMatchBackend};
pub use external::{external_flow, ExternalBackend};
pub use farneback::{farneback_flow, poly_expansion, FarnebackBackend, FarnebackParams, PolyCoeffs, PolyExpansion};

use thiserror::Error;

use crate::frame::{FlowField, LumaFrame};
use crate::io::FormatError;
use crate::prefilter::RoiRect;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("frames differ in size: {prev_w}x{prev_h} vs {curr_w}x{curr_h}")]
    DimensionMismatch { prev_w: usize, prev_h: usize, curr_w: usize, curr_h: usize },
    #[error("frame {w}x{h} smaller than the {poly_n}-px expansion window")]
    FrameTooSmall { w: usize, h: usize, poly_n: usize },
    #[error("invalid flow params: {what}")]
    InvalidParams { what: String },
    #[error("command template {template:?} is missing the {missing} placeholder")]
    BadTemplate { template: String, missing: &'static str },
    #[error("failed to run {program:?}: {source}")]
    BackendSpawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("backend exited with {status}: {stderr}")]
    BackendExit { status: String, stderr: String },
    #[error("backend scratch files: {0}")]
    Workspace(#[source] FormatError),
    #[error("backend produced an unusable field: {0}")]
    BackendOutput(#[source] FormatError),
    #[error("backend returned {got_w}x{got_h} for {want_w}x{want_h} input")]
    OutputDimensionMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
    #[error("roi {index} {roi:?} exceeds frame {w}x{h}")]
    RoiOutOfBounds { index: usize, roi: RoiRect, w: usize, h: usize },
    #[error("roi {index} {roi:?}: {source}")]
    Roi {
        index: usize,
        roi: RoiRect,
        #[source]
        source: Box<FlowError>,
    },
}

/// A dense displacement estimator.
///
/// `pad_radius` and `alignment` describe how to cut sub-frames so that a
/// region cropped out of a full-frame run and a padded per-region run agree:
/// the gate pads each region by `pad_radius` and snaps the padded rectangle
/// to multiples of `alignment`.
pub trait FlowBackend {
    /// Dense displacement carrying `prev` content onto `curr`.
    fn compute(&self, prev: &LumaFrame, curr: &LumaFrame) -> Result<FlowField, FlowError>;

    /// Pixels of context a cropped region needs on every side.
    fn pad_radius(&self) -> usize;

    /// Snap, in pixels, for padded sub-frame origins and sizes.
    fn alignment(&self) -> usize {
        1
    }
}

/// Runs the backend once per region on a padded sub-frame, crops the result
/// back to the region, and leaves (0, 0) outside every region. Overlapping
/// regions resolve to the last one in list order. Backend failures carry the
/// region index.
pub fn gated_flow(
    prev: &LumaFrame,
    curr: &LumaFrame,
    rois: &[RoiRect],
    backend: &dyn FlowBackend,
) -> Result<FlowField, FlowError> {
    if prev.width() != curr.width() || prev.height() != curr.height() {
        return Err(FlowError::DimensionMismatch {
            prev_w: prev.width(),
            prev_h: prev.height(),
            curr_w: curr.width(),
            curr_h: curr.height(),
        });
    }
    let (w, h) = (prev.width(), prev.height());
    let pad = backend.pad_radius();
    let align = backend.alignment().max(1);

    let mut out = FlowField::new(w, h);
    for (index, roi) in rois.iter().enumerate() {
        if roi.right() > w || roi.bottom() > h {
            return Err(FlowError::RoiOutOfBounds { index, roi: *roi, w, h });
        }
        let x0 = (roi.x.saturating_sub(pad) / align) * align;
        let y0 = (roi.y.saturating_sub(pad) / align) * align;
        let x1 = next_multiple(roi.right() + pad, align).min(w);
        let y1 = next_multiple(roi.bottom() + pad, align).min(h);

        let sub_prev = prev.crop(x0, y0, x1 - x0, y1 - y0);
        let sub_curr = curr.crop(x0, y0, x1 - x0, y1 - y0);
        let field = backend
            .compute(&sub_prev, &sub_curr)
            .map_err(|e| FlowError::Roi { index, roi: *roi, source: Box::new(e) })?;

        for y in roi.y..roi.bottom() {
            for x in roi.x..roi.right() {
                let (u, v) = field.get(x - x0, y - y0);
                out.set(x, y, u, v);
            }
        }
    }
    Ok(out)
}

fn next_multiple(value: usize, align: usize) -> usize {
    value.div_ceil(align) * align
}
