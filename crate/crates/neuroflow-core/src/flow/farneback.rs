//! Polynomial-expansion displacement estimation.
//!
//! Every pixel neighborhood is fitted with a quadratic f(x) ~ x'Ax + b'x + c
//! under a separable Gaussian weight. Between two frames a displacement d
//! satisfies A d = -(b2 - b1)/2; solving that per pixel after averaging the
//! normal-equation terms over a Gaussian window, and iterating with the
//! current estimate warping the second frame's coefficients, yields dense
//! flow. A coarse-to-fine pyramid extends the reach beyond the window size.

use serde::{Deserialize, Serialize};

use super::{FlowBackend, FlowError};
use crate::frame::{FlowField, LumaFrame};

/// Ridge added to the normal equations, as a fraction of the matrix trace.
const RIDGE_FRACTION: f64 = 1e-3;
/// Determinants below this solve to zero displacement instead.
const DET_GUARD: f64 = 1e-30;
/// Anti-alias blur width for one pyramid downsample step is this over scale.
const DOWNSAMPLE_SIGMA_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarnebackParams {
    /// Pyramid depth including the full-resolution level.
    pub pyramid_levels: usize,
    /// Size ratio between consecutive levels, in (0, 1).
    pub pyramid_scale: f64,
    /// Refinement passes per level.
    pub iterations: usize,
    /// Expansion window edge, odd and >= 3.
    pub poly_n: usize,
    /// Gaussian weight width inside the expansion window, px.
    pub poly_sigma: f64,
    /// Gaussian width for averaging the per-pixel equations, px.
    pub window_sigma: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        FarnebackParams {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            iterations: 3,
            poly_n: 7,
            poly_sigma: 1.5,
            window_sigma: 7.5,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        let fail = |what: String| Err(FlowError::InvalidParams { what });
        if self.pyramid_levels < 1 {
            return fail("pyramid_levels must be at least 1".into());
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return fail(format!("pyramid_scale {} must lie in (0, 1)", self.pyramid_scale));
        }
        if self.iterations < 1 {
            return fail("iterations must be at least 1".into());
        }
        if self.poly_n < 3 || self.poly_n.is_multiple_of(2) {
            return fail(format!("poly_n {} must be odd and at least 3", self.poly_n));
        }
        if !(self.poly_sigma > 0.0 && self.poly_sigma.is_finite()) {
            return fail(format!("poly_sigma {} must be positive and finite", self.poly_sigma));
        }
        if !(self.window_sigma > 0.0 && self.window_sigma.is_finite()) {
            return fail(format!("window_sigma {} must be positive and finite", self.window_sigma));
        }
        Ok(())
    }

    /// Context a cropped region needs so its interior matches a full-frame
    /// run: averaging window plus expansion window plus one resampling px,
    /// all measured at the coarsest level and mapped back to full resolution.
    pub fn pad_radius(&self) -> usize {
        let reach = 3.0 * self.window_sigma + ((self.poly_n - 1) / 2) as f64 + 1.0;
        let coarsest = self.pyramid_scale.powi(self.pyramid_levels as i32 - 1);
        (reach / coarsest).ceil() as usize
    }

    /// Snap that keeps sub-frame pyramid sampling grids in phase with a
    /// full-frame run.
    pub fn grid_alignment(&self) -> usize {
        let a = self.pyramid_scale.powi(-(self.pyramid_levels as i32 - 1)).round();
        (a as usize).max(1)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FarnebackBackend {
    pub params: FarnebackParams,
}

impl FlowBackend for FarnebackBackend {
    fn compute(&self, prev: &LumaFrame, curr: &LumaFrame) -> Result<FlowField, FlowError> {
        farneback_flow(prev, curr, &self.params)
    }

    fn pad_radius(&self) -> usize {
        self.params.pad_radius()
    }

    fn alignment(&self) -> usize {
        self.params.grid_alignment()
    }
}

/// Quadratic fit at one pixel: f(x + t) ~ t'At + b't + c with
/// A = [[a11, a12], [a12, a22]] and b = (b1, b2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyCoeffs {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

/// Per-pixel quadratic coefficients for a whole frame.
#[derive(Debug, Clone)]
pub struct PolyExpansion {
    width: usize,
    height: usize,
    a11: Vec<f64>,
    a12: Vec<f64>,
    a22: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    c: Vec<f64>,
}

impl PolyExpansion {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> PolyCoeffs {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        PolyCoeffs {
            a11: self.a11[i],
            a12: self.a12[i],
            a22: self.a22[i],
            b1: self.b1[i],
            b2: self.b2[i],
            c: self.c[i],
        }
    }

    /// Bilinear read of all six planes at a continuous point; coordinates
    /// clamp to the frame.
    fn sample(&self, x: f64, y: f64) -> PolyCoeffs {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;

        let i00 = y0 * self.width + x0;
        let i10 = y0 * self.width + x1;
        let i01 = y1 * self.width + x0;
        let i11 = y1 * self.width + x1;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let mix = |p: &[f64]| w00 * p[i00] + w10 * p[i10] + w01 * p[i01] + w11 * p[i11];

        PolyCoeffs {
            a11: mix(&self.a11),
            a12: mix(&self.a12),
            a22: mix(&self.a22),
            b1: mix(&self.b1),
            b2: mix(&self.b2),
            c: mix(&self.c),
        }
    }
}

/// Fits the per-pixel quadratic model over a `poly_n` window with Gaussian
/// weight `poly_sigma`. Window samples past the border clamp to the edge.
pub fn poly_expansion(
    frame: &LumaFrame,
    poly_n: usize,
    poly_sigma: f64,
) -> Result<PolyExpansion, FlowError> {
    if poly_n < 3 || poly_n.is_multiple_of(2) {
        return Err(FlowError::InvalidParams {
            what: format!("poly_n {poly_n} must be odd and at least 3"),
        });
    }
    if !(poly_sigma > 0.0 && poly_sigma.is_finite()) {
        return Err(FlowError::InvalidParams {
            what: format!("poly_sigma {poly_sigma} must be positive and finite"),
        });
    }
    if frame.width() < poly_n || frame.height() < poly_n {
        return Err(FlowError::FrameTooSmall {
            w: frame.width(),
            h: frame.height(),
            poly_n,
        });
    }
    Ok(expand(&Plane::from_frame(frame), poly_n, poly_sigma))
}

/// Dense displacement carrying `prev` content onto `curr`, positive right/down.
pub fn farneback_flow(
    prev: &LumaFrame,
    curr: &LumaFrame,
    params: &FarnebackParams,
) -> Result<FlowField, FlowError> {
    params.validate()?;
    if prev.width() != curr.width() || prev.height() != curr.height() {
        return Err(FlowError::DimensionMismatch {
            prev_w: prev.width(),
            prev_h: prev.height(),
            curr_w: curr.width(),
            curr_h: curr.height(),
        });
    }
    let (w, h) = (prev.width(), prev.height());
    if w < params.poly_n || h < params.poly_n {
        return Err(FlowError::FrameTooSmall { w, h, poly_n: params.poly_n });
    }

    let levels = effective_levels(params, w, h);
    let pyr_prev = build_pyramid(Plane::from_frame(prev), levels, params.pyramid_scale);
    let pyr_curr = build_pyramid(Plane::from_frame(curr), levels, params.pyramid_scale);

    let coarsest = &pyr_prev[levels - 1];
    let mut u = Plane::new(coarsest.w, coarsest.h);
    let mut v = Plane::new(coarsest.w, coarsest.h);

    for k in (0..levels).rev() {
        let img1 = &pyr_prev[k];
        let img2 = &pyr_curr[k];
        if img1.w != u.w || img1.h != u.h {
            u = upscale_flow_plane(&u, img1.w, img1.h, img1.w as f64 / u.w as f64);
            v = upscale_flow_plane(&v, img1.w, img1.h, img1.h as f64 / v.h as f64);
        }
        let e1 = expand(img1, params.poly_n, params.poly_sigma);
        let e2 = expand(img2, params.poly_n, params.poly_sigma);
        for _ in 0..params.iterations {
            refine(&e1, &e2, &mut u, &mut v, params.window_sigma);
        }
    }

    let u32f: Vec<f32> = u.data.iter().map(|&x| x as f32).collect();
    let v32f: Vec<f32> = v.data.iter().map(|&x| x as f32).collect();
    let field = FlowField::from_vecs(w, h, u32f, v32f);
    debug_assert!(field.is_finite());
    Ok(field)
}

/// Row-major f64 image with (x, y) addressing.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn new(w: usize, h: usize) -> Plane {
        Plane { w, h, data: vec![0.0; w * h] }
    }

    fn from_frame(frame: &LumaFrame) -> Plane {
        Plane {
            w: frame.width(),
            h: frame.height(),
            data: frame.as_slice().iter().map(|&p| p as f64).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Bilinear read at a continuous point, clamped to the frame.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) + (self.at(x1, y0) - self.at(x0, y0)) * fx;
        let bottom = self.at(x0, y1) + (self.at(x1, y1) - self.at(x0, y1)) * fx;
        top + (bottom - top) * fy
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }
    kernel
}

/// Correlates each row with an odd-length kernel, clamping samples to the
/// row ends.
fn correlate_rows(src: &Plane, kernel: &[f64]) -> Plane {
    let r = kernel.len() / 2;
    let (w, h) = (src.w, src.h);
    let mut out = Plane::new(w, h);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let dst = &mut out.data[y * w..(y + 1) * w];
        let edge = |x: usize| -> f64 {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let sx = (x + i).saturating_sub(r).min(w - 1);
                acc += k * row[sx];
            }
            acc
        };
        if w > 2 * r {
            for (x, slot) in dst.iter_mut().enumerate().take(r) {
                *slot = edge(x);
            }
            for (x, slot) in dst.iter_mut().enumerate().take(w - r).skip(r) {
                let base = x - r;
                let mut acc = 0.0;
                for (i, &k) in kernel.iter().enumerate() {
                    acc += k * row[base + i];
                }
                *slot = acc;
            }
            for (x, slot) in dst.iter_mut().enumerate().skip(w - r) {
                *slot = edge(x);
            }
        } else {
            for (x, slot) in dst.iter_mut().enumerate() {
                *slot = edge(x);
            }
        }
    }
    out
}

/// Correlates each column with an odd-length kernel, clamping samples to the
/// column ends.
fn correlate_cols(src: &Plane, kernel: &[f64]) -> Plane {
    let r = kernel.len() / 2;
    let (w, h) = (src.w, src.h);
    let mut out = Plane::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (i, &k) in kernel.iter().enumerate() {
            let sy = (y + i).saturating_sub(r).min(h - 1);
            let srow = &src.data[sy * w..(sy + 1) * w];
            if i == 0 {
                for x in 0..w {
                    dst[x] = k * srow[x];
                }
            } else {
                for x in 0..w {
                    dst[x] += k * srow[x];
                }
            }
        }
    }
    out
}

fn blur_plane(src: &Plane, sigma: f64) -> Plane {
    let kernel = gaussian_kernel(sigma);
    correlate_cols(&correlate_rows(src, &kernel), &kernel)
}

/// Weighted least squares of the quadratic model via three row correlations
/// (weights g, t*g, t^2*g) followed by column correlations, then closed-form
/// coefficient recovery from the window moments m2 and m4.
fn expand(img: &Plane, poly_n: usize, poly_sigma: f64) -> PolyExpansion {
    let r = ((poly_n - 1) / 2) as i64;
    let g = {
        let mut g: Vec<f64> = (-r..=r)
            .map(|t| (-((t * t) as f64) / (2.0 * poly_sigma * poly_sigma)).exp())
            .collect();
        let total: f64 = g.iter().sum();
        for w in &mut g {
            *w /= total;
        }
        g
    };
    let gt: Vec<f64> = g.iter().zip(-r..=r).map(|(&w, t)| w * t as f64).collect();
    let gtt: Vec<f64> = g.iter().zip(-r..=r).map(|(&w, t)| w * (t * t) as f64).collect();
    let m2: f64 = gtt.iter().sum();
    let m4: f64 = g.iter().zip(-r..=r).map(|(&w, t)| w * ((t * t * t * t) as f64)).sum();
    let quad_denom = m4 - m2 * m2;

    let s0 = correlate_rows(img, &g);
    let s1 = correlate_rows(img, &gt);
    let s2 = correlate_rows(img, &gtt);

    let v1 = correlate_cols(&s0, &g);
    let vx = correlate_cols(&s1, &g);
    let vy = correlate_cols(&s0, &gt);
    let vxx = correlate_cols(&s2, &g);
    let vyy = correlate_cols(&s0, &gtt);
    let vxy = correlate_cols(&s1, &gt);

    let n = img.w * img.h;
    let mut exp = PolyExpansion {
        width: img.w,
        height: img.h,
        a11: vec![0.0; n],
        a12: vec![0.0; n],
        a22: vec![0.0; n],
        b1: vec![0.0; n],
        b2: vec![0.0; n],
        c: vec![0.0; n],
    };
    for i in 0..n {
        let a11 = (vxx.data[i] - m2 * v1.data[i]) / quad_denom;
        let a22 = (vyy.data[i] - m2 * v1.data[i]) / quad_denom;
        exp.a11[i] = a11;
        exp.a22[i] = a22;
        exp.a12[i] = vxy.data[i] / (2.0 * m2 * m2);
        exp.b1[i] = vx.data[i] / m2;
        exp.b2[i] = vy.data[i] / m2;
        exp.c[i] = v1.data[i] - m2 * (a11 + a22);
    }
    exp
}

/// Caps the pyramid depth so the coarsest level still fits the expansion
/// window.
fn effective_levels(params: &FarnebackParams, w: usize, h: usize) -> usize {
    let mut levels = params.pyramid_levels;
    while levels > 1 {
        let coarse = (w.min(h) as f64 * params.pyramid_scale.powi(levels as i32 - 1)).round();
        if coarse >= params.poly_n as f64 {
            break;
        }
        levels -= 1;
    }
    levels
}

fn level_dim(base: usize, scale: f64, level: usize) -> usize {
    ((base as f64 * scale.powi(level as i32)).round() as usize).max(1)
}

fn build_pyramid(base: Plane, levels: usize, scale: f64) -> Vec<Plane> {
    let (w0, h0) = (base.w, base.h);
    let mut pyr = vec![base];
    for k in 1..levels {
        let blurred = blur_plane(&pyr[k - 1], DOWNSAMPLE_SIGMA_FACTOR / scale);
        pyr.push(resize_bilinear(&blurred, level_dim(w0, scale, k), level_dim(h0, scale, k)));
    }
    pyr
}

/// Resize with pixel centers aligned: output center (x+0.5) maps to input
/// (x+0.5) * src/dst.
fn resize_bilinear(src: &Plane, w: usize, h: usize) -> Plane {
    let sx = src.w as f64 / w as f64;
    let sy = src.h as f64 / h as f64;
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let px = (x as f64 + 0.5) * sx - 0.5;
            let py = (y as f64 + 0.5) * sy - 0.5;
            out.data[y * w + x] = src.sample(px, py);
        }
    }
    out
}

/// Upsamples one flow component to the next-finer level and rescales its
/// values by the actual level size ratio.
fn upscale_flow_plane(src: &Plane, w: usize, h: usize, value_ratio: f64) -> Plane {
    let mut out = resize_bilinear(src, w, h);
    for x in &mut out.data {
        *x *= value_ratio;
    }
    out
}

/// One displacement update: accumulate the averaged normal equations at the
/// current estimate, smooth them over the window, and re-solve per pixel.
fn refine(e1: &PolyExpansion, e2: &PolyExpansion, u: &mut Plane, v: &mut Plane, window_sigma: f64) {
    let (w, h) = (u.w, u.h);
    let mut g11 = Plane::new(w, h);
    let mut g12 = Plane::new(w, h);
    let mut g22 = Plane::new(w, h);
    let mut h1 = Plane::new(w, h);
    let mut h2 = Plane::new(w, h);

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = (x as f64 + u.data[i]).clamp(0.0, (w - 1) as f64);
            let sy = (y as f64 + v.data[i]).clamp(0.0, (h - 1) as f64);
            let dx = sx - x as f64;
            let dy = sy - y as f64;

            let c1 = e1.at(x, y);
            let c2 = e2.sample(sx, sy);
            let a11 = 0.5 * (c1.a11 + c2.a11);
            let a12 = 0.5 * (c1.a12 + c2.a12);
            let a22 = 0.5 * (c1.a22 + c2.a22);
            let db1 = 0.5 * (c1.b1 - c2.b1) + a11 * dx + a12 * dy;
            let db2 = 0.5 * (c1.b2 - c2.b2) + a12 * dx + a22 * dy;

            g11.data[i] = a11 * a11 + a12 * a12;
            g12.data[i] = a12 * (a11 + a22);
            g22.data[i] = a22 * a22 + a12 * a12;
            h1.data[i] = a11 * db1 + a12 * db2;
            h2.data[i] = a12 * db1 + a22 * db2;
        }
    }

    let g11 = blur_plane(&g11, window_sigma);
    let g12 = blur_plane(&g12, window_sigma);
    let g22 = blur_plane(&g22, window_sigma);
    let h1 = blur_plane(&h1, window_sigma);
    let h2 = blur_plane(&h2, window_sigma);

    for i in 0..w * h {
        let trace = g11.data[i] + g22.data[i];
        if trace.is_nan() || trace <= 0.0 {
            u.data[i] = 0.0;
            v.data[i] = 0.0;
            continue;
        }
        let ridge = RIDGE_FRACTION * trace;
        let m11 = g11.data[i] + ridge;
        let m22 = g22.data[i] + ridge;
        let m12 = g12.data[i];
        let det = m11 * m22 - m12 * m12;
        if det.abs() < DET_GUARD {
            u.data[i] = 0.0;
            v.data[i] = 0.0;
        } else {
            u.data[i] = (m22 * h1.data[i] - m12 * h2.data[i]) / det;
            v.data[i] = (m11 * h2.data[i] - m12 * h1.data[i]) / det;
        }
    }
}
