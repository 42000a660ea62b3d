//! Test-only frame generators built on the shared value noise.

use crate::frame::LumaFrame;
use crate::noise::value_noise;

const CELL: f64 = 6.0;
const LO: f64 = 30.0;
const HI: f64 = 225.0;

/// Smooth textured frame, deterministic in `seed`.
pub(crate) fn noise_frame(width: usize, height: usize, seed: u64) -> LumaFrame {
    shifted_noise_frame(width, height, seed, 0, 0)
}

/// The same noise field sampled `dx`, `dy` pixels earlier, so content appears
/// displaced by (+dx, +dy) relative to [`noise_frame`] with fresh, consistent
/// texture entering at the edges.
pub(crate) fn shifted_noise_frame(
    width: usize,
    height: usize,
    seed: u64,
    dx: i64,
    dy: i64,
) -> LumaFrame {
    let mut frame = LumaFrame::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let n = value_noise(seed, x as f64 - dx as f64, y as f64 - dy as f64, CELL);
            frame.set(x, y, (LO + n * (HI - LO)).round() as u8);
        }
    }
    frame
}
