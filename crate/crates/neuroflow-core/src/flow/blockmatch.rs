//! Exhaustive block matching. Slow and simple on purpose: it shares no code
//! or failure modes with the polynomial-expansion path, which makes it a
//! trustworthy second opinion in tests.

use serde::{Deserialize, Serialize};

use super::{FlowBackend, FlowError};
use crate::frame::{FlowField, LumaFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockMatchBackend {
    /// Block edge, px.
    pub block: usize,
    /// Largest displacement tried along each axis, px.
    pub search_radius: usize,
}

impl Default for BlockMatchBackend {
    fn default() -> Self {
        BlockMatchBackend { block: 8, search_radius: 8 }
    }
}

impl FlowBackend for BlockMatchBackend {
    fn compute(&self, prev: &LumaFrame, curr: &LumaFrame) -> Result<FlowField, FlowError> {
        if prev.width() != curr.width() || prev.height() != curr.height() {
            return Err(FlowError::DimensionMismatch {
                prev_w: prev.width(),
                prev_h: prev.height(),
                curr_w: curr.width(),
                curr_h: curr.height(),
            });
        }
        Ok(block_match_flow(prev, curr, self.block, self.search_radius))
    }

    fn pad_radius(&self) -> usize {
        self.search_radius + self.block
    }

    fn alignment(&self) -> usize {
        self.block
    }
}

/// Integer displacement per block minimizing the sum of absolute differences
/// over a (2*radius+1)^2 search window, replicated across the block. Ties
/// fall to the smallest displacement magnitude, then lexicographic (dy, dx).
/// Samples outside the frame clamp to the border. Blocks at the right and
/// bottom edges may be partial.
pub fn block_match_flow(
    prev: &LumaFrame,
    curr: &LumaFrame,
    block: usize,
    search_radius: usize,
) -> FlowField {
    assert!(block >= 3, "block edge must be at least 3");
    assert!(search_radius >= 1, "search radius must be at least 1");
    assert!(
        prev.width() == curr.width() && prev.height() == curr.height(),
        "frames must share dimensions"
    );
    let (w, h) = (prev.width(), prev.height());
    let radius = search_radius as i64;

    let sample = |frame: &LumaFrame, x: i64, y: i64| -> i64 {
        let cx = x.clamp(0, w as i64 - 1) as usize;
        let cy = y.clamp(0, h as i64 - 1) as usize;
        frame.get(cx, cy) as i64
    };

    let mut field = FlowField::new(w, h);
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let bw = block.min(w - bx);
            let bh = block.min(h - by);

            let mut best_key = (i64::MAX, i64::MAX, i64::MAX, i64::MAX);
            let mut best = (0i64, 0i64);
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let mut sad = 0;
                    for yy in 0..bh {
                        for xx in 0..bw {
                            let p = prev.get(bx + xx, by + yy) as i64;
                            let c =
                                sample(curr, (bx + xx) as i64 + dx, (by + yy) as i64 + dy);
                            sad += (p - c).abs();
                        }
                    }
                    let key = (sad, dx * dx + dy * dy, dy, dx);
                    if key < best_key {
                        best_key = key;
                        best = (dx, dy);
                    }
                }
            }

            for yy in 0..bh {
                for xx in 0..bw {
                    field.set(bx + xx, by + yy, best.0 as f32, best.1 as f32);
                }
            }
        }
    }
    field
}
