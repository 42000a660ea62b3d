//! Downstream consumers of the three-layer tensor: motion prediction by
//! Lanczos warping, flow segmentation through polar/HSV thresholding, and
//! box tracking with non-maximum suppression.

use std::f64::consts::PI;

use thiserror::Error;

use crate::frame::{FlowField, LumaFrame};
use crate::grid::BinaryImage;
use crate::memristor::MotionPattern;
use crate::prefilter::RoiRect;
use crate::sensor::BinConfig;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("pattern {rows}x{cols} cells with {m}x{n} binning needs a {need_w}x{need_h} flow field, got {got_w}x{got_h}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        m: usize,
        n: usize,
        need_w: usize,
        need_h: usize,
        got_w: usize,
        got_h: usize,
    },
}

/// The three aligned layers: one motion bit plus two velocity components per
/// pixel. Velocity is (0, 0) wherever gating skipped the pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuroFlowTensor {
    pattern: BinaryImage,
    flow: FlowField,
}

impl NeuroFlowTensor {
    pub fn width(&self) -> usize {
        self.flow.width()
    }

    pub fn height(&self) -> usize {
        self.flow.height()
    }

    /// Pixel-resolution motion bits (rows = height, cols = width).
    pub fn pattern(&self) -> &BinaryImage {
        &self.pattern
    }

    pub fn flow(&self) -> &FlowField {
        &self.flow
    }

    pub fn bit(&self, x: usize, y: usize) -> u8 {
        self.pattern.get(y, x)
    }
}

/// Bundles a cell-resolution motion pattern with a pixel-resolution flow
/// field, tiling each pattern cell over its m x n pixel block.
pub fn assemble_tensor(
    pattern: &MotionPattern,
    bin_cfg: &BinConfig,
    flow: FlowField,
) -> Result<NeuroFlowTensor, TaskError> {
    let need_w = pattern.cols() * bin_cfg.n;
    let need_h = pattern.rows() * bin_cfg.m;
    if flow.width() != need_w || flow.height() != need_h {
        return Err(TaskError::DimensionMismatch {
            rows: pattern.rows(),
            cols: pattern.cols(),
            m: bin_cfg.m,
            n: bin_cfg.n,
            need_w,
            need_h,
            got_w: flow.width(),
            got_h: flow.height(),
        });
    }
    let mut bits = BinaryImage::new(need_h, need_w);
    for y in 0..need_h {
        for x in 0..need_w {
            bits.set(y, x, pattern.get(y / bin_cfg.m, x / bin_cfg.n));
        }
    }
    Ok(NeuroFlowTensor { pattern: bits, flow })
}

/// Windowed-sinc resampling weight with half-width `n`: 1 at the center,
/// sinc(x) * sinc(x/n) inside the window, 0 at and beyond |x| = n.
pub fn lanczos_kernel(x: f64, n: usize) -> f64 {
    debug_assert!(n >= 1);
    let nf = n as f64;
    if x.abs() >= nf {
        return 0.0;
    }
    if x == 0.0 {
        return 1.0;
    }
    let sinc = |t: f64| (PI * t).sin() / (PI * t);
    sinc(x) * sinc(x / nf)
}

/// Predicts the next frame by backward warping: wherever the motion bit is
/// set, the output samples the input at (x - u, y - v) through a separable
/// 2n-tap Lanczos kernel (weights renormalized to sum 1, source coordinates
/// clamped to the frame); elsewhere the input pixel is copied through.
pub fn warp_predict(frame: &LumaFrame, tensor: &NeuroFlowTensor, n: usize) -> LumaFrame {
    assert!(n >= 1, "kernel half-width must be at least 1");
    assert!(
        frame.width() == tensor.width() && frame.height() == tensor.height(),
        "frame and tensor must share dimensions"
    );
    let (w, h) = (frame.width(), frame.height());
    let taps = 2 * n;
    let mut wx = vec![0.0f64; taps];
    let mut wy = vec![0.0f64; taps];

    let mut out = LumaFrame::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if tensor.bit(x, y) == 0 {
                out.set(x, y, frame.get(x, y));
                continue;
            }
            let (u, v) = tensor.flow.get(x, y);
            let sx = x as f64 - u as f64;
            let sy = y as f64 - v as f64;
            let x0 = sx.floor() as i64 - n as i64 + 1;
            let y0 = sy.floor() as i64 - n as i64 + 1;
            for (k, slot) in wx.iter_mut().enumerate() {
                *slot = lanczos_kernel(sx - (x0 + k as i64) as f64, n);
            }
            for (k, slot) in wy.iter_mut().enumerate() {
                *slot = lanczos_kernel(sy - (y0 + k as i64) as f64, n);
            }

            let mut acc = 0.0;
            let mut weight = 0.0;
            for (ky, &wyk) in wy.iter().enumerate() {
                let yy = (y0 + ky as i64).clamp(0, h as i64 - 1) as usize;
                for (kx, &wxk) in wx.iter().enumerate() {
                    let xx = (x0 + kx as i64).clamp(0, w as i64 - 1) as usize;
                    let wk = wyk * wxk;
                    acc += wk * frame.get(xx, yy) as f64;
                    weight += wk;
                }
            }
            let value = (acc / weight).round().clamp(0.0, 255.0) as u8;
            out.set(x, y, value);
        }
    }
    out
}

/// Per-pixel flow in polar form: magnitude in px/frame and direction in
/// degrees within [0, 360).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarFlow {
    width: usize,
    height: usize,
    magnitude: Vec<f64>,
    angle: Vec<f64>,
}

impl PolarFlow {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// (magnitude, angle) at one pixel.
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        (self.magnitude[i], self.angle[i])
    }
}

pub fn flow_to_polar(flow: &FlowField) -> PolarFlow {
    let (w, h) = (flow.width(), flow.height());
    let mut magnitude = Vec::with_capacity(w * h);
    let mut angle = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let (u, v) = (u as f64, v as f64);
            magnitude.push((u * u + v * v).sqrt());
            let mut deg = v.atan2(u).to_degrees();
            if deg < 0.0 {
                deg += 360.0;
            }
            angle.push(deg);
        }
    }
    PolarFlow { width: w, height: h, magnitude, angle }
}

/// Planar HSV image with h in [0, 180), s fixed at 255, v in [0, 255].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsvImage {
    width: usize,
    height: usize,
    h: Vec<u8>,
    s: Vec<u8>,
    v: Vec<u8>,
}

impl HsvImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> (u8, u8, u8) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        (self.h[i], self.s[i], self.v[i])
    }
}

/// Maps direction to hue (angle halved, so the full circle fits in [0, 180))
/// and magnitude to value, saturating at `mag_ref` px/frame.
pub fn polar_to_hsv(polar: &PolarFlow, mag_ref: f64) -> HsvImage {
    assert!(mag_ref > 0.0, "mag_ref must be positive");
    let count = polar.width * polar.height;
    let mut out = HsvImage {
        width: polar.width,
        height: polar.height,
        h: Vec::with_capacity(count),
        s: vec![255; count],
        v: Vec::with_capacity(count),
    };
    for i in 0..count {
        out.h.push((polar.angle[i] / 2.0).floor() as u8);
        out.v.push((255.0 * polar.magnitude[i] / mag_ref).round().min(255.0) as u8);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
}

/// Binary morphology with a square structuring element; pixels outside the
/// image count as 0. Open is erode followed by dilate.
pub fn morph(bin: &BinaryImage, op: MorphOp, kernel: usize) -> BinaryImage {
    assert!(kernel % 2 == 1 && kernel >= 1, "kernel must be odd and at least 1");
    match op {
        MorphOp::Open => {
            let eroded = morph(bin, MorphOp::Erode, kernel);
            morph(&eroded, MorphOp::Dilate, kernel)
        }
        MorphOp::Erode | MorphOp::Dilate => {
            let r = (kernel / 2) as i64;
            let (rows, cols) = (bin.rows() as i64, bin.cols() as i64);
            let mut out = BinaryImage::new(bin.rows(), bin.cols());
            for y in 0..rows {
                for x in 0..cols {
                    let mut all = true;
                    let mut any = false;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (yy, xx) = (y + dy, x + dx);
                            let bit = if yy < 0 || yy >= rows || xx < 0 || xx >= cols {
                                0
                            } else {
                                bin.get(yy as usize, xx as usize)
                            };
                            all &= bit == 1;
                            any |= bit == 1;
                        }
                    }
                    let keep = match op {
                        MorphOp::Erode => all,
                        _ => any,
                    };
                    out.set(y as usize, x as usize, keep as u8);
                }
            }
            out
        }
    }
}

/// Moving-object mask: within the ROI union, keeps pixels whose HSV value
/// channel (magnitude scaled by `mag_ref`) exceeds `v_thresh`, then opens
/// with a square kernel and re-clips to the ROI union, so the result is 0
/// everywhere outside the ROIs.
pub fn segment_mask(
    tensor: &NeuroFlowTensor,
    rois: &[RoiRect],
    v_thresh: u8,
    kernel: usize,
    mag_ref: f64,
) -> BinaryImage {
    let (w, h) = (tensor.width(), tensor.height());
    let hsv = polar_to_hsv(&flow_to_polar(tensor.flow()), mag_ref);

    let in_union = |x: usize, y: usize| rois.iter().any(|r| r.contains_point(x, y));
    let mut mask = BinaryImage::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if in_union(x, y) && hsv.get(x, y).2 > v_thresh {
                mask.set(y, x, 1);
            }
        }
    }
    let mut opened = morph(&mask, MorphOp::Open, kernel);
    for y in 0..h {
        for x in 0..w {
            if opened.get(y, x) == 1 && !in_union(x, y) {
                opened.set(y, x, 0);
            }
        }
    }
    opened
}

/// Detected object: bounding rectangle plus mean in-rect flow magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackBox {
    pub rect: RoiRect,
    pub score: f64,
}

/// Finds 8-connected components of the mask in raster order, keeps those
/// with at least `min_area` set pixels, and boxes each one. Scores are mean
/// flow magnitude over the whole rectangle.
pub fn detect_boxes(mask: &BinaryImage, flow: &FlowField, min_area: usize) -> Vec<TrackBox> {
    assert!(min_area >= 1, "min_area must be at least 1");
    assert!(
        mask.cols() == flow.width() && mask.rows() == flow.height(),
        "mask and flow must share dimensions"
    );
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut seen = vec![false; rows * cols];
    let mut boxes = Vec::new();

    for start_y in 0..rows {
        for start_x in 0..cols {
            if mask.get(start_y, start_x) == 0 || seen[start_y * cols + start_x] {
                continue;
            }
            let mut queue = vec![(start_x, start_y)];
            seen[start_y * cols + start_x] = true;
            let (mut min_x, mut max_x, mut min_y, mut max_y) =
                (start_x, start_x, start_y, start_y);
            let mut area = 0usize;
            while let Some((x, y)) = queue.pop() {
                area += 1;
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= cols as i64 || ny >= rows as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if mask.get(ny, nx) == 1 && !seen[ny * cols + nx] {
                            seen[ny * cols + nx] = true;
                            queue.push((nx, ny));
                        }
                    }
                }
            }
            if area < min_area {
                continue;
            }
            let rect = RoiRect::new(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
            let mut total = 0.0;
            for y in rect.y..rect.bottom() {
                for x in rect.x..rect.right() {
                    let (u, v) = flow.get(x, y);
                    total += ((u as f64).powi(2) + (v as f64).powi(2)).sqrt();
                }
            }
            boxes.push(TrackBox { rect, score: total / rect.area() as f64 });
        }
    }
    boxes
}

/// Greedy non-maximum suppression: boxes ranked by score (ties toward larger
/// area, then lexicographic position); each kept box suppresses all later
/// boxes overlapping it with IoU >= `iou_thresh`.
pub fn nms_boxes(boxes: &[TrackBox], iou_thresh: f64) -> Vec<TrackBox> {
    assert!(
        iou_thresh > 0.0 && iou_thresh < 1.0,
        "iou_thresh must lie strictly between 0 and 1"
    );
    let mut ranked: Vec<&TrackBox> = boxes.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores must not be NaN")
            .then(b.rect.area().cmp(&a.rect.area()))
            .then(a.rect.x.cmp(&b.rect.x))
            .then(a.rect.y.cmp(&b.rect.y))
    });

    let mut kept: Vec<TrackBox> = Vec::new();
    for candidate in ranked {
        if kept.iter().all(|k| k.rect.iou(&candidate.rect) < iou_thresh) {
            kept.push(candidate.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthutil;
    use proptest::prelude::*;

    fn full_pattern(rows: usize, cols: usize) -> MotionPattern {
        BinaryImage::from_vec(rows, cols, vec![1; rows * cols])
    }

    fn uniform_flow(w: usize, h: usize, u: f32, v: f32) -> FlowField {
        FlowField::from_vecs(w, h, vec![u; w * h], vec![v; w * h])
    }

    fn tensor_of(pattern: MotionPattern, m: usize, n: usize, flow: FlowField) -> NeuroFlowTensor {
        let cfg = BinConfig { m, n, ..BinConfig::default() };
        assemble_tensor(&pattern, &cfg, flow).unwrap()
    }

    #[test]
    fn tensor_tiles_each_pattern_cell() {
        let pattern = BinaryImage::from_vec(2, 2, vec![1, 0, 0, 1]);
        let tensor = tensor_of(pattern, 2, 2, uniform_flow(4, 4, 0.0, 0.0));
        for y in 0..4 {
            for x in 0..4 {
                let expect = u8::from((y / 2) == (x / 2));
                assert_eq!(tensor.bit(x, y), expect, "({x},{y})");
            }
        }
    }

    #[test]
    fn zero_pattern_stays_zero_at_pixel_resolution() {
        let tensor =
            tensor_of(BinaryImage::new(3, 4), 4, 4, uniform_flow(16, 12, 1.0, -1.0));
        assert_eq!(tensor.pattern().count_ones(), 0);
    }

    #[test]
    fn recorder_scale_pattern_fills_full_hd_layer() {
        let tensor = tensor_of(full_pattern(45, 96), 20, 20, uniform_flow(1920, 900, 0.0, 0.0));
        assert_eq!(tensor.width(), 1920);
        assert_eq!(tensor.height(), 900);
        assert_eq!(tensor.pattern().count_ones(), 1920 * 900);
    }

    #[test]
    fn tensor_dimension_mismatch_is_rejected() {
        let cfg = BinConfig { m: 2, n: 2, ..BinConfig::default() };
        let err = assemble_tensor(&full_pattern(2, 2), &cfg, uniform_flow(4, 6, 0.0, 0.0));
        assert!(matches!(err, Err(TaskError::DimensionMismatch { need_w: 4, need_h: 4, .. })));
    }

    #[test]
    fn kernel_center_and_window_edges_are_pinned() {
        assert_eq!(lanczos_kernel(0.0, 3), 1.0);
        assert!(lanczos_kernel(1.0, 3).abs() < 1e-15);
        assert_eq!(lanczos_kernel(3.0, 3), 0.0);
        assert_eq!(lanczos_kernel(-3.5, 3), 0.0);
    }

    #[test]
    fn kernel_half_sample_value_is_stable() {
        let expect = 0.6079271018540265;
        assert!((lanczos_kernel(0.5, 3) - expect).abs() < 1e-12);
        assert!((lanczos_kernel(-0.5, 3) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_flow_warp_is_the_exact_identity() {
        let frame = synthutil::noise_frame(24, 18, 31);
        let tensor = tensor_of(full_pattern(3, 4), 6, 6, uniform_flow(24, 18, 0.0, 0.0));
        assert_eq!(warp_predict(&frame, &tensor, 3), frame);
    }

    #[test]
    fn integer_flow_warp_shifts_the_interior_exactly() {
        let frame = synthutil::noise_frame(32, 24, 32);
        let tensor = tensor_of(full_pattern(3, 4), 8, 8, uniform_flow(32, 24, 2.0, 0.0));
        let out = warp_predict(&frame, &tensor, 3);
        for y in 0..24 {
            for x in 5..32 {
                assert_eq!(out.get(x, y), frame.get(x - 2, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn cleared_pattern_copies_the_input_through() {
        let frame = synthutil::noise_frame(16, 16, 33);
        let tensor = tensor_of(BinaryImage::new(2, 2), 8, 8, uniform_flow(16, 16, 5.5, -3.25));
        assert_eq!(warp_predict(&frame, &tensor, 3), frame);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Renormalized Lanczos weights preserve flat content: warping a
        /// constant image by any sub-pixel flow returns the same constant.
        #[test]
        fn warping_a_constant_image_preserves_it(
            u in -2.0f32..2.0,
            v in -2.0f32..2.0,
        ) {
            let frame = LumaFrame::from_vec(16, 16, vec![150; 256]);
            let tensor = tensor_of(full_pattern(2, 2), 8, 8, uniform_flow(16, 16, u, v));
            let out = warp_predict(&frame, &tensor, 3);
            prop_assert_eq!(out, frame);
        }

        /// Cartesian -> polar -> cartesian is the identity for nonzero flow.
        #[test]
        fn polar_round_trip_recovers_components(
            u in -10.0f64..10.0,
            v in -10.0f64..10.0,
        ) {
            prop_assume!(u.hypot(v) > 1e-6);
            let flow = uniform_flow(1, 1, u as f32, v as f32);
            let (mag, ang) = flow_to_polar(&flow).get(0, 0);
            prop_assert!((0.0..360.0).contains(&ang));
            let rad = ang.to_radians();
            prop_assert!((mag * rad.cos() - u as f32 as f64).abs() < 1e-6);
            prop_assert!((mag * rad.sin() - v as f32 as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn polar_quadrants_are_mapped_correctly() {
        let flow = FlowField::from_vecs(
            3,
            1,
            vec![1.0, 0.0, -1.0],
            vec![0.0, 2.0, -1.0],
        );
        let polar = flow_to_polar(&flow);
        let (m0, a0) = polar.get(0, 0);
        assert!((m0 - 1.0).abs() < 1e-12 && a0.abs() < 1e-12);
        let (m1, a1) = polar.get(1, 0);
        assert!((m1 - 2.0).abs() < 1e-12 && (a1 - 90.0).abs() < 1e-12);
        let (m2, a2) = polar.get(2, 0);
        assert!((m2 - 2f64.sqrt()).abs() < 1e-12 && (a2 - 225.0).abs() < 1e-10);
    }

    #[test]
    fn hsv_mapping_hits_the_pinned_examples() {
        let still = flow_to_polar(&uniform_flow(1, 1, 0.0, 0.0));
        assert_eq!(polar_to_hsv(&still, 8.0).get(0, 0), (0, 255, 0));

        // Angle 180 at magnitude mag_ref: flow (-ref, 0).
        let left = flow_to_polar(&uniform_flow(1, 1, -8.0, 0.0));
        assert_eq!(polar_to_hsv(&left, 8.0).get(0, 0), (90, 255, 255));

        let fast = flow_to_polar(&uniform_flow(1, 1, 16.0, 0.0));
        assert_eq!(polar_to_hsv(&fast, 8.0).get(0, 0).2, 255);
    }

    #[test]
    fn hue_stays_below_180_for_all_angles() {
        let flow = uniform_flow(1, 1, 1.0, -1e-5);
        let polar = flow_to_polar(&flow);
        let (_, ang) = polar.get(0, 0);
        assert!(ang > 359.0);
        assert!(polar_to_hsv(&polar, 8.0).get(0, 0).0 < 180);
    }

    #[test]
    fn unit_kernel_morphology_is_the_identity() {
        let mask = BinaryImage::from_vec(3, 3, vec![0, 1, 0, 1, 1, 0, 0, 0, 1]);
        for op in [MorphOp::Erode, MorphOp::Dilate, MorphOp::Open] {
            assert_eq!(morph(&mask, op, 1), mask);
        }
    }

    #[test]
    fn opening_removes_an_isolated_pixel() {
        let mut mask = BinaryImage::new(7, 7);
        mask.set(3, 3, 1);
        assert_eq!(morph(&mask, MorphOp::Open, 3).count_ones(), 0);
    }

    #[test]
    fn eroding_a_five_square_leaves_its_three_core() {
        let mut mask = BinaryImage::new(9, 9);
        for y in 2..7 {
            for x in 2..7 {
                mask.set(y, x, 1);
            }
        }
        let eroded = morph(&mask, MorphOp::Erode, 3);
        assert_eq!(eroded.count_ones(), 9);
        for y in 3..6 {
            for x in 3..6 {
                assert_eq!(eroded.get(y, x), 1, "({x},{y})");
            }
        }
    }

    /// Tensor whose flow has the given magnitude rightward inside one patch.
    fn patch_tensor(w: usize, h: usize, patch: RoiRect, mag: f32) -> NeuroFlowTensor {
        let mut flow = FlowField::new(w, h);
        for y in patch.y..patch.bottom() {
            for x in patch.x..patch.right() {
                flow.set(x, y, mag, 0.0);
            }
        }
        tensor_of(full_pattern(1, 1), h, w, flow)
    }

    #[test]
    fn zero_flow_segments_to_an_empty_mask() {
        let tensor = patch_tensor(16, 16, RoiRect::new(4, 4, 6, 6), 0.0);
        let mask = segment_mask(&tensor, &[RoiRect::new(0, 0, 16, 16)], 25, 3, 8.0);
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn moving_patch_segments_to_exactly_its_pixels() {
        let patch = RoiRect::new(4, 4, 6, 6);
        let tensor = patch_tensor(16, 16, patch, 8.0);
        let mask = segment_mask(&tensor, &[RoiRect::new(0, 0, 16, 16)], 25, 3, 8.0);
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(mask.get(y, x) == 1, patch.contains_point(x, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn single_pixel_speck_is_opened_away() {
        let mut flow = FlowField::new(16, 16);
        flow.set(8, 8, 8.0, 0.0);
        let tensor = tensor_of(full_pattern(1, 1), 16, 16, flow);
        let mask = segment_mask(&tensor, &[RoiRect::new(0, 0, 16, 16)], 25, 3, 8.0);
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn mask_is_clipped_to_the_roi_union() {
        // Fast flow everywhere, but only one ROI: nothing may leak outside it.
        let tensor = patch_tensor(16, 16, RoiRect::new(0, 0, 16, 16), 8.0);
        let roi = RoiRect::new(2, 2, 5, 5);
        let mask = segment_mask(&tensor, &[roi], 25, 3, 8.0);
        assert!(mask.count_ones() > 0);
        for y in 0..16 {
            for x in 0..16 {
                if !roi.contains_point(x, y) {
                    assert_eq!(mask.get(y, x), 0, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn empty_mask_detects_nothing() {
        let mask = BinaryImage::new(12, 12);
        let flow = uniform_flow(12, 12, 1.0, 0.0);
        assert!(detect_boxes(&mask, &flow, 1).is_empty());
    }

    #[test]
    fn one_blob_gives_one_box_with_mean_magnitude_score() {
        let mut mask = BinaryImage::new(20, 20);
        for y in 5..15 {
            for x in 3..13 {
                mask.set(y, x, 1);
            }
        }
        let flow = uniform_flow(20, 20, 0.0, -2.0);
        let boxes = detect_boxes(&mask, &flow, 16);
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].rect, RoiRect::new(3, 5, 10, 10));
        assert!((boxes[0].score - 2.0).abs() < 1e-9);
    }

    #[test]
    fn blobs_below_min_area_are_dropped() {
        let mut mask = BinaryImage::new(20, 20);
        for y in 2..8 {
            for x in 2..8 {
                mask.set(y, x, 1);
            }
        }
        mask.set(15, 15, 1);
        mask.set(15, 16, 1);
        let flow = uniform_flow(20, 20, 1.0, 0.0);
        let boxes = detect_boxes(&mask, &flow, 16);
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].rect, RoiRect::new(2, 2, 6, 6));
    }

    #[test]
    fn diagonal_pixels_join_one_component() {
        let mut mask = BinaryImage::new(6, 6);
        mask.set(1, 1, 1);
        mask.set(2, 2, 1);
        mask.set(3, 3, 1);
        let flow = uniform_flow(6, 6, 1.0, 0.0);
        let boxes = detect_boxes(&mask, &flow, 3);
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].rect, RoiRect::new(1, 1, 3, 3));
    }

    #[test]
    fn nms_keeps_a_single_box() {
        let boxes = vec![TrackBox { rect: RoiRect::new(1, 2, 5, 5), score: 1.0 }];
        assert_eq!(nms_boxes(&boxes, 0.5), boxes);
    }

    #[test]
    fn nms_collapses_identical_boxes() {
        let b = TrackBox { rect: RoiRect::new(0, 0, 4, 4), score: 1.0 };
        assert_eq!(nms_boxes(&[b.clone(), b.clone()], 0.5).len(), 1);
    }

    #[test]
    fn nms_suppresses_the_pinned_overlap_example() {
        let first = TrackBox { rect: RoiRect::new(0, 0, 10, 10), score: 2.0 };
        let second = TrackBox { rect: RoiRect::new(2, 0, 10, 10), score: 1.0 };
        assert!((first.rect.iou(&second.rect) - 2.0 / 3.0).abs() < 1e-12);
        let kept = nms_boxes(&[first.clone(), second], 0.5);
        assert_eq!(kept, vec![first]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Survivors form an antichain under IoU >= thresh and are a subset
        /// of the input.
        #[test]
        fn nms_output_is_an_iou_antichain_subset(
            raw in prop::collection::vec(
                (0usize..30, 0usize..30, 1usize..12, 1usize..12, 0u32..100),
                0..12,
            ),
        ) {
            let boxes: Vec<TrackBox> = raw
                .into_iter()
                .map(|(x, y, w, h, s)| TrackBox {
                    rect: RoiRect::new(x, y, w, h),
                    score: s as f64 / 10.0,
                })
                .collect();
            let kept = nms_boxes(&boxes, 0.5);
            for k in &kept {
                prop_assert!(boxes.iter().any(|b| b == k));
            }
            for (i, a) in kept.iter().enumerate() {
                for b in kept.iter().skip(i + 1) {
                    prop_assert!(a.rect.iou(&b.rect) < 0.5);
                }
            }
        }
    }
}
