//! Quality measures: structural similarity between frames, pixel accuracy
//! and IoU for masks and boxes, and the per-run report bundle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::LumaFrame;
use crate::grid::BinaryImage;
use crate::prefilter::RoiRect;
use crate::tasks::TrackBox;

/// Stabilizers (K1*L)^2 and (K2*L)^2 with K1=0.01, K2=0.03, L=255.
pub const SSIM_C1: f64 = 6.5025;
pub const SSIM_C2: f64 = 58.5225;
/// Window edge for [`SsimMode::Windowed`].
pub const SSIM_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimMode {
    Global,
    #[default]
    Windowed,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("inputs differ in size: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch { a_w: usize, a_h: usize, b_w: usize, b_h: usize },
    #[error("{w}x{h} image has no complete {SSIM_WINDOW}x{SSIM_WINDOW} window")]
    WindowTooSmall { w: usize, h: usize },
    #[error("IoU of two empty masks is undefined")]
    UndefinedIou,
    #[error("ground-truth box list is empty")]
    EmptyGroundTruth,
}

/// Structural similarity. Global mode evaluates one term over whole-image
/// moments; windowed mode averages the term over complete non-overlapping
/// 8x8 windows (partial edge windows are excluded) and requires at least one.
pub fn ssim(x: &LumaFrame, y: &LumaFrame, mode: SsimMode) -> Result<f64, MetricsError> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(MetricsError::DimensionMismatch {
            a_w: x.width(),
            a_h: x.height(),
            b_w: y.width(),
            b_h: y.height(),
        });
    }
    match mode {
        SsimMode::Global => Ok(ssim_term(x, y, 0, 0, x.width(), x.height())),
        SsimMode::Windowed => {
            let wx = x.width() / SSIM_WINDOW;
            let wy = x.height() / SSIM_WINDOW;
            if wx == 0 || wy == 0 {
                return Err(MetricsError::WindowTooSmall { w: x.width(), h: x.height() });
            }
            let mut total = 0.0;
            for j in 0..wy {
                for i in 0..wx {
                    total +=
                        ssim_term(x, y, i * SSIM_WINDOW, j * SSIM_WINDOW, SSIM_WINDOW, SSIM_WINDOW);
                }
            }
            Ok(total / (wx * wy) as f64)
        }
    }
}

/// One SSIM term over a rectangle, from population moments.
fn ssim_term(x: &LumaFrame, y: &LumaFrame, x0: usize, y0: usize, w: usize, h: usize) -> f64 {
    let n = (w * h) as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for yy in y0..y0 + h {
        for xx in x0..x0 + w {
            let a = x.get(xx, yy) as f64;
            let b = y.get(xx, yy) as f64;
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    let mx = sx / n;
    let my = sy / n;
    let vx = sxx / n - mx * mx;
    let vy = syy / n - my * my;
    let cov = sxy / n - mx * my;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Fraction of pixels where the two masks agree.
pub fn pixel_accuracy(pred: &BinaryImage, gt: &BinaryImage) -> Result<f64, MetricsError> {
    if pred.rows() != gt.rows() || pred.cols() != gt.cols() {
        return Err(MetricsError::DimensionMismatch {
            a_w: pred.cols(),
            a_h: pred.rows(),
            b_w: gt.cols(),
            b_h: gt.rows(),
        });
    }
    let matching = pred
        .bits()
        .iter()
        .zip(gt.bits())
        .filter(|(a, b)| a == b)
        .count();
    Ok(matching as f64 / (pred.rows() * pred.cols()) as f64)
}

/// Rectangle intersection over union; total because rectangles are nonempty.
pub fn iou_rect(a: &RoiRect, b: &RoiRect) -> f64 {
    a.iou(b)
}

/// Mask intersection over union. Exactly one empty mask gives 0; two empty
/// masks have no defined overlap ratio.
pub fn iou_mask(a: &BinaryImage, b: &BinaryImage) -> Result<f64, MetricsError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(MetricsError::DimensionMismatch {
            a_w: a.cols(),
            a_h: a.rows(),
            b_w: b.cols(),
            b_h: b.rows(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x == 1 && y == 1) as usize;
        union += (x == 1 || y == 1) as usize;
    }
    if union == 0 {
        return Err(MetricsError::UndefinedIou);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean IoU of predictions against ground truth: predictions (in list order)
/// greedily claim their best-IoU unused ground-truth box; overlap-free
/// predictions contribute 0 and claim nothing. The mean is over the number
/// of predictions; no predictions at all scores 0.
pub fn mean_box_iou(pred: &[TrackBox], gt: &[RoiRect]) -> Result<f64, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut used = vec![false; gt.len()];
    let mut total = 0.0;
    for p in pred {
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in gt.iter().enumerate() {
            if used[i] {
                continue;
            }
            let iou = p.rect.iou(g);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((i, iou));
            }
        }
        if let Some((i, iou)) = best {
            if iou > 0.0 {
                used[i] = true;
                total += iou;
            }
        }
    }
    Ok(total / pred.len() as f64)
}

/// Per-run evaluation bundle: one entry per evaluated frame pair, in
/// sequence order, plus cumulative stage timings in seconds. Metric vectors
/// stay empty when their ground truth or task output is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsReport {
    pub ssim: Vec<f64>,
    pub pa: Vec<f64>,
    pub mean_iou: Vec<f64>,
    pub stage_seconds: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthutil;
    use proptest::prelude::*;

    #[test]
    fn self_similarity_is_exactly_one_in_both_modes() {
        let frame = synthutil::noise_frame(16, 16, 41);
        assert_eq!(ssim(&frame, &frame, SsimMode::Global).unwrap(), 1.0);
        assert_eq!(ssim(&frame, &frame, SsimMode::Windowed).unwrap(), 1.0);
    }

    #[test]
    fn black_versus_white_collapses_to_the_luminance_term() {
        let black = LumaFrame::new(16, 16);
        let white = LumaFrame::from_vec(16, 16, vec![255; 256]);
        let expect = SSIM_C1 / (255.0 * 255.0 + SSIM_C1);
        let global = ssim(&black, &white, SsimMode::Global).unwrap();
        assert!((global - expect).abs() < 1e-12, "global {global} vs {expect}");
        let windowed = ssim(&black, &white, SsimMode::Windowed).unwrap();
        assert!((windowed - expect).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_change_dents_similarity_slightly() {
        let x = synthutil::noise_frame(64, 64, 42);
        let mut y = x.clone();
        y.set(30, 30, x.get(30, 30).wrapping_add(120));
        for mode in [SsimMode::Global, SsimMode::Windowed] {
            let s = ssim(&x, &y, mode).unwrap();
            assert!(s < 1.0 && s > 0.9, "{mode:?}: {s}");
        }
    }

    #[test]
    fn windowed_mode_ignores_partial_edge_windows() {
        let x = synthutil::noise_frame(20, 12, 43);
        let mut y = x.clone();
        y.set(18, 10, x.get(18, 10).wrapping_add(90));
        assert_eq!(ssim(&x, &y, SsimMode::Windowed).unwrap(), 1.0);
        assert!(ssim(&x, &y, SsimMode::Global).unwrap() < 1.0);
    }

    #[test]
    fn windowed_mode_needs_one_complete_window() {
        let tiny = LumaFrame::new(7, 7);
        assert!(matches!(
            ssim(&tiny, &tiny, SsimMode::Windowed),
            Err(MetricsError::WindowTooSmall { w: 7, h: 7 })
        ));
        assert_eq!(ssim(&tiny, &tiny, SsimMode::Global).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_mismatched_frames() {
        let a = LumaFrame::new(8, 8);
        let b = LumaFrame::new(8, 9);
        assert!(matches!(
            ssim(&a, &b, SsimMode::Global),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ssim_is_symmetric_and_bounded(seed_a in 0u64..500, seed_b in 0u64..500) {
            let x = synthutil::noise_frame(24, 16, seed_a);
            let y = synthutil::noise_frame(24, 16, seed_b);
            for mode in [SsimMode::Global, SsimMode::Windowed] {
                let xy = ssim(&x, &y, mode).unwrap();
                let yx = ssim(&y, &x, mode).unwrap();
                prop_assert!((xy - yx).abs() < 1e-12);
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&xy), "{mode:?}: {xy}");
            }
        }

        /// Flipping every prediction bit flips every per-pixel agreement.
        #[test]
        fn accuracy_of_mask_and_complement_sums_to_one(bits in prop::collection::vec(0u8..2, 36)) {
            let pred = BinaryImage::from_vec(6, 6, bits.clone());
            let flipped = BinaryImage::from_vec(6, 6, bits.iter().map(|b| 1 - b).collect());
            let gt = BinaryImage::from_vec(
                6,
                6,
                (0..36).map(|i| ((i * 7) % 3 == 0) as u8).collect(),
            );
            let direct = pixel_accuracy(&pred, &gt).unwrap();
            let complement = pixel_accuracy(&flipped, &gt).unwrap();
            prop_assert!((direct + complement - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pixel_accuracy_identities_hold() {
        let gt = BinaryImage::from_vec(2, 2, vec![1, 0, 1, 0]);
        let flipped = BinaryImage::from_vec(2, 2, vec![0, 1, 0, 1]);
        let half = BinaryImage::from_vec(2, 2, vec![1, 0, 0, 1]);
        assert_eq!(pixel_accuracy(&gt, &gt).unwrap(), 1.0);
        assert_eq!(pixel_accuracy(&flipped, &gt).unwrap(), 0.0);
        assert_eq!(pixel_accuracy(&half, &gt).unwrap(), 0.5);
    }

    #[test]
    fn rect_iou_arithmetic_is_pinned() {
        let a = RoiRect::new(0, 0, 10, 10);
        let b = RoiRect::new(5, 0, 10, 10);
        assert!((iou_rect(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou_rect(&a, &a), 1.0);
        assert_eq!(iou_rect(&a, &RoiRect::new(20, 20, 3, 3)), 0.0);
    }

    #[test]
    fn mask_iou_handles_empty_inputs() {
        let empty = BinaryImage::new(4, 4);
        let mut full = BinaryImage::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                full.set(y, x, 1);
            }
        }
        assert!(matches!(iou_mask(&empty, &empty), Err(MetricsError::UndefinedIou)));
        assert_eq!(iou_mask(&full, &empty).unwrap(), 0.0);
        assert_eq!(iou_mask(&full, &full).unwrap(), 1.0);
    }

    #[test]
    fn matching_predictions_score_one() {
        let gt = vec![RoiRect::new(0, 0, 5, 5), RoiRect::new(10, 10, 4, 4)];
        let pred: Vec<TrackBox> =
            gt.iter().map(|&rect| TrackBox { rect, score: 1.0 }).collect();
        assert_eq!(mean_box_iou(&pred, &gt).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_prediction_halves_the_mean() {
        let gt = vec![RoiRect::new(0, 0, 5, 5)];
        let pred = vec![
            TrackBox { rect: RoiRect::new(0, 0, 5, 5), score: 1.0 },
            TrackBox { rect: RoiRect::new(30, 30, 5, 5), score: 1.0 },
        ];
        assert_eq!(mean_box_iou(&pred, &gt).unwrap(), 0.5);
    }

    #[test]
    fn each_ground_truth_box_is_claimed_once() {
        let gt = vec![RoiRect::new(0, 0, 5, 5)];
        let pred = vec![
            TrackBox { rect: RoiRect::new(0, 0, 5, 5), score: 1.0 },
            TrackBox { rect: RoiRect::new(0, 0, 5, 5), score: 1.0 },
        ];
        assert_eq!(mean_box_iou(&pred, &gt).unwrap(), 0.5);
    }

    #[test]
    fn empty_inputs_follow_the_conventions() {
        let gt = vec![RoiRect::new(0, 0, 5, 5)];
        assert_eq!(mean_box_iou(&[], &gt).unwrap(), 0.0);
        let pred = vec![TrackBox { rect: RoiRect::new(0, 0, 5, 5), score: 1.0 }];
        assert!(matches!(mean_box_iou(&pred, &[]), Err(MetricsError::EmptyGroundTruth)));
    }

    #[test]
    fn report_round_trips_through_toml() {
        let mut report = MetricsReport {
            ssim: vec![0.97, 0.99],
            pa: vec![0.995],
            mean_iou: vec![0.75],
            ..MetricsReport::default()
        };
        report.stage_seconds.insert("flow".into(), 0.25);
        report.stage_seconds.insert("predict".into(), 0.03125);

        let text = toml::to_string(&report).unwrap();
        let back: MetricsReport = toml::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
