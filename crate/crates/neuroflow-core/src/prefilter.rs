//! Pre-filter: distills a binary motion pattern into expanded pixel-space
//! regions of interest through Gaussian smoothing, Sobel gradients,
//! non-maximum-suppressed edges, and contour tracing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BinaryImage, Grid};
use crate::memristor::MotionPattern;
use crate::sensor::BinConfig;

/// Largest Sobel gradient magnitude reachable on a unit-range image; both
/// components are bounded by 4x the value range.
pub const MAX_UNIT_EDGE_MAGNITUDE: f64 = 5.656854249492381;

/// Axis-aligned rectangle in pixel or grid coordinates: top-left corner
/// (`x`, `y`), extent `w`×`h`, both >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Regions of interest, in list order (later entries win on overlap).
pub type RoiSet = Vec<RoiRect>;

impl RoiRect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        assert!(w >= 1 && h >= 1, "rectangle must be nonempty");
        RoiRect { x, y, w, h }
    }

    /// First column right of the rectangle.
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    /// First row below the rectangle.
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains_point(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &RoiRect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersection_area(&self, other: &RoiRect) -> usize {
        let w = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let h = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        w * h
    }

    /// Intersection over union; in [0, 1] because both areas are positive.
    pub fn iou(&self, other: &RoiRect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    /// Smallest rectangle containing both.
    pub fn union_rect(&self, other: &RoiRect) -> RoiRect {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        RoiRect {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }
}

/// Tuning for the pattern-to-ROI chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefilterParams {
    /// Gaussian smoothing width applied to the pattern, grid cells.
    pub sigma: f64,
    /// Edge keep threshold as a fraction of [`MAX_UNIT_EDGE_MAGNITUDE`].
    pub thresh_frac: f64,
    /// Bounding rectangles grow by `expand * max(w, h)` per side.
    pub expand: f64,
    /// Whether overlapping rectangles are merged.
    pub merge: bool,
    /// Merge any pair with at least this IoU.
    pub merge_iou: f64,
}

impl Default for PrefilterParams {
    fn default() -> Self {
        PrefilterParams { sigma: 1.0, thresh_frac: 0.1, expand: 0.25, merge: true, merge_iou: 0.3 }
    }
}

impl PrefilterParams {
    pub fn validate(&self) -> Result<(), PrefilterError> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(PrefilterError::NonPositiveSigma { sigma: self.sigma });
        }
        if !self.thresh_frac.is_finite() || self.thresh_frac <= 0.0 {
            return Err(PrefilterError::InvalidParams {
                what: format!("thresh_frac {} must be finite and > 0", self.thresh_frac),
            });
        }
        if !self.expand.is_finite() || self.expand < 0.0 {
            return Err(PrefilterError::InvalidParams {
                what: format!("expand {} must be finite and >= 0", self.expand),
            });
        }
        if !(self.merge_iou > 0.0 && self.merge_iou < 1.0) {
            return Err(PrefilterError::InvalidParams {
                what: format!("merge_iou {} must lie in (0, 1)", self.merge_iou),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PrefilterError {
    #[error("sigma {sigma} must be > 0")]
    NonPositiveSigma { sigma: f64 },
    #[error("image {rows}x{cols} too small for 3x3 gradients")]
    TooSmall { rows: usize, cols: usize },
    #[error("pattern {rows}x{cols} with {n}x{m} units does not cover frame {w}x{h}")]
    DimensionMismatch { rows: usize, cols: usize, m: usize, n: usize, w: usize, h: usize },
    #[error("invalid prefilter params: {what}")]
    InvalidParams { what: String },
}

/// Separable Gaussian smoothing with kernel radius `ceil(3*sigma)`,
/// clamp-to-border sampling, and weights normalized to sum 1.
pub fn gaussian_blur(img: &Grid, sigma: f64) -> Result<Grid, PrefilterError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(PrefilterError::NonPositiveSigma { sigma });
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for k in -radius..=radius {
        kernel.push((-((k * k) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }

    let (rows, cols) = (img.rows() as i64, img.cols() as i64);
    let mut horizontal = Grid::new(img.rows(), img.cols());
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let cc = (c + i as i64 - radius).clamp(0, cols - 1);
                acc += w * img.get(r as usize, cc as usize);
            }
            horizontal.set(r as usize, c as usize, acc);
        }
    }
    let mut out = Grid::new(img.rows(), img.cols());
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let rr = (r + i as i64 - radius).clamp(0, rows - 1);
                acc += w * horizontal.get(rr as usize, c as usize);
            }
            out.set(r as usize, c as usize, acc);
        }
    }
    Ok(out)
}

/// 3×3 Sobel gradient pair (`gx` along columns, `gy` along rows) with
/// clamp-to-border sampling.
pub fn sobel_gradients(img: &Grid) -> Result<(Grid, Grid), PrefilterError> {
    if img.rows() < 3 || img.cols() < 3 {
        return Err(PrefilterError::TooSmall { rows: img.rows(), cols: img.cols() });
    }
    let (rows, cols) = (img.rows() as i64, img.cols() as i64);
    let sample = |r: i64, c: i64| img.get(r.clamp(0, rows - 1) as usize, c.clamp(0, cols - 1) as usize);

    let mut gx = Grid::new(img.rows(), img.cols());
    let mut gy = Grid::new(img.rows(), img.cols());
    for r in 0..rows {
        for c in 0..cols {
            let p = [
                [sample(r - 1, c - 1), sample(r - 1, c), sample(r - 1, c + 1)],
                [sample(r, c - 1), sample(r, c), sample(r, c + 1)],
                [sample(r + 1, c - 1), sample(r + 1, c), sample(r + 1, c + 1)],
            ];
            let dx = (p[0][2] + 2.0 * p[1][2] + p[2][2]) - (p[0][0] + 2.0 * p[1][0] + p[2][0]);
            let dy = (p[2][0] + 2.0 * p[2][1] + p[2][2]) - (p[0][0] + 2.0 * p[0][1] + p[0][2]);
            gx.set(r as usize, c as usize, dx);
            gy.set(r as usize, c as usize, dy);
        }
    }
    Ok((gx, gy))
}

/// Thins gradient ridges by non-maximum suppression along the gradient
/// direction (quantized to 0°/45°/90°/135°) and keeps pixels whose magnitude
/// exceeds `thresh`.
///
/// # Panics
/// Panics unless the grids share a shape and `thresh > 0`.
pub fn edge_thin_binarize(gx: &Grid, gy: &Grid, thresh: f64) -> BinaryImage {
    assert!(gx.same_shape(gy), "gradient grids must share a shape");
    assert!(thresh > 0.0, "threshold must be > 0");
    let (rows, cols) = (gx.rows() as i64, gx.cols() as i64);

    let mut mag = Grid::new(gx.rows(), gx.cols());
    for i in 0..mag.data().len() {
        mag.data_mut()[i] = gx.data()[i].hypot(gy.data()[i]);
    }
    let mag_at = |r: i64, c: i64| {
        if r < 0 || r >= rows || c < 0 || c >= cols {
            0.0
        } else {
            mag.get(r as usize, c as usize)
        }
    };

    let mut out = BinaryImage::new(gx.rows(), gx.cols());
    for r in 0..rows {
        for c in 0..cols {
            let m = mag.get(r as usize, c as usize);
            if m <= thresh {
                continue;
            }
            let mut angle = gy.get(r as usize, c as usize)
                .atan2(gx.get(r as usize, c as usize))
                .to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dc, dr) = match (((angle + 22.5) / 45.0).floor() as i64).rem_euclid(4) {
                0 => (1i64, 0i64),
                1 => (1, 1),
                2 => (0, 1),
                _ => (1, -1),
            };
            if m >= mag_at(r + dr, c + dc) && m >= mag_at(r - dr, c - dc) {
                out.set(r as usize, c as usize, 1);
            }
        }
    }
    out
}

/// Traces one closed boundary per 8-connected foreground component.
///
/// Each contour is a list of (x, y) = (col, row) boundary pixels, starting at
/// the component's topmost-leftmost pixel and proceeding toward increasing x
/// along its top edge. Components are reported in raster order of their
/// starting pixel.
pub fn find_contours(bin: &BinaryImage) -> Vec<Vec<(usize, usize)>> {
    let (rows, cols) = (bin.rows() as i64, bin.cols() as i64);
    let is_fg = |x: i64, y: i64| {
        x >= 0 && x < cols && y >= 0 && y < rows && bin.get(y as usize, x as usize) == 1
    };

    // Clockwise Moore neighborhood in raster coordinates, starting east.
    const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
    let dir_index = |dx: i64, dy: i64| DIRS.iter().position(|&d| d == (dx, dy)).expect("unit step");

    let mut seen = vec![false; (rows * cols) as usize];
    let mut contours = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            if !is_fg(col, row) || seen[(row * cols + col) as usize] {
                continue;
            }
            // Mark the whole component so later pixels do not restart it.
            let mut component = 0usize;
            let mut queue = vec![(col, row)];
            seen[(row * cols + col) as usize] = true;
            while let Some((x, y)) = queue.pop() {
                component += 1;
                for (dx, dy) in DIRS {
                    let (nx, ny) = (x + dx, y + dy);
                    if is_fg(nx, ny) && !seen[(ny * cols + nx) as usize] {
                        seen[(ny * cols + nx) as usize] = true;
                        queue.push((nx, ny));
                    }
                }
            }

            // Moore boundary trace: sweep clockwise around the current pixel
            // starting just past the backtrack pixel; stop on returning to
            // the start with the starting backtrack.
            let start = (col, row);
            let mut contour = vec![(col as usize, row as usize)];
            let mut current = start;
            let mut backtrack_dir = 4; // west: nothing left of a topmost-leftmost pixel
            let initial = (current, backtrack_dir);
            let max_steps = 4 * component + 8;
            for _ in 0..max_steps {
                let mut hit = None;
                for k in 1..=8 {
                    let d = (backtrack_dir + k) % 8;
                    let p = (current.0 + DIRS[d].0, current.1 + DIRS[d].1);
                    if is_fg(p.0, p.1) {
                        hit = Some((d, k));
                        break;
                    }
                }
                let Some((d, k)) = hit else { break };
                let next = (current.0 + DIRS[d].0, current.1 + DIRS[d].1);
                let before = if k == 1 { backtrack_dir } else { (backtrack_dir + k - 1) % 8 };
                let b_pos = (current.0 + DIRS[before].0, current.1 + DIRS[before].1);
                let next_backtrack = dir_index(b_pos.0 - next.0, b_pos.1 - next.1);
                if (next, next_backtrack) == initial {
                    break;
                }
                contour.push((next.0 as usize, next.1 as usize));
                current = next;
                backtrack_dir = next_backtrack;
            }
            contours.push(contour);
        }
    }
    contours
}

/// Bounding rectangles of contours, inflated by `expand * max(w, h)`
/// (rounded) per side and clamped to `bounds` = (width, height). When
/// `merge_iou` is set, rectangle pairs with at least that IoU are replaced by
/// their union until no pair qualifies.
pub fn rois_from_contours(
    contours: &[Vec<(usize, usize)>],
    expand: f64,
    merge_iou: Option<f64>,
    bounds: (usize, usize),
) -> RoiSet {
    assert!(expand >= 0.0, "expand must be >= 0");
    let (width, height) = bounds;
    let mut rois = Vec::with_capacity(contours.len());
    for contour in contours {
        if contour.is_empty() {
            continue;
        }
        let x0 = contour.iter().map(|p| p.0).min().expect("nonempty");
        let x1 = contour.iter().map(|p| p.0).max().expect("nonempty");
        let y0 = contour.iter().map(|p| p.1).min().expect("nonempty");
        let y1 = contour.iter().map(|p| p.1).max().expect("nonempty");
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let grow = (expand * w.max(h) as f64).round() as usize;

        let gx0 = x0.saturating_sub(grow);
        let gy0 = y0.saturating_sub(grow);
        let gx1 = (x1 + grow).min(width - 1);
        let gy1 = (y1 + grow).min(height - 1);
        rois.push(RoiRect::new(gx0, gy0, gx1 - gx0 + 1, gy1 - gy0 + 1));
    }

    if let Some(threshold) = merge_iou {
        loop {
            let mut merged = None;
            'search: for i in 0..rois.len() {
                for j in i + 1..rois.len() {
                    if rois[i].iou(&rois[j]) >= threshold {
                        merged = Some((i, j));
                        break 'search;
                    }
                }
            }
            let Some((i, j)) = merged else { break };
            rois[i] = rois[i].union_rect(&rois[j]);
            rois.remove(j);
        }
    }
    rois
}

/// Full pattern-to-ROI chain: blur, Sobel, edge thinning, contours, bounding
/// rectangles — then grid rectangles are scaled by the unit size (`n`, `m`)
/// into pixel coordinates and clamped to the frame.
pub fn pattern_to_rois(
    pattern: &MotionPattern,
    bin_cfg: &BinConfig,
    frame_dims: (usize, usize),
    params: &PrefilterParams,
) -> Result<RoiSet, PrefilterError> {
    params.validate()?;
    let (frame_w, frame_h) = frame_dims;
    if pattern.cols() * bin_cfg.n != frame_w || pattern.rows() * bin_cfg.m != frame_h {
        return Err(PrefilterError::DimensionMismatch {
            rows: pattern.rows(),
            cols: pattern.cols(),
            m: bin_cfg.m,
            n: bin_cfg.n,
            w: frame_w,
            h: frame_h,
        });
    }

    let values = pattern.bits().iter().map(|&b| b as f64).collect();
    let grid = Grid::from_vec(pattern.rows(), pattern.cols(), values);
    let blurred = gaussian_blur(&grid, params.sigma)?;
    let (gx, gy) = sobel_gradients(&blurred)?;
    let edges = edge_thin_binarize(&gx, &gy, params.thresh_frac * MAX_UNIT_EDGE_MAGNITUDE);
    let contours = find_contours(&edges);
    let grid_rois = rois_from_contours(
        &contours,
        params.expand,
        params.merge.then_some(params.merge_iou),
        (pattern.cols(), pattern.rows()),
    );

    Ok(grid_rois
        .into_iter()
        .map(|r| {
            let x = r.x * bin_cfg.n;
            let y = r.y * bin_cfg.m;
            RoiRect::new(
                x,
                y,
                (r.w * bin_cfg.n).min(frame_w - x),
                (r.h * bin_cfg.m).min(frame_h - y),
            )
        })
        .collect())
}
