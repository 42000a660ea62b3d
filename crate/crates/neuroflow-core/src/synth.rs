//! Deterministic synthetic scenes: a seeded value-noise background with
//! optional global drift, translating textured sprites, and exact per-frame
//! ground truth (masks, boxes, dense flow).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{FlowField, LumaFrame};
use crate::grid::BinaryImage;
use crate::io::{self, FormatError};
use crate::noise::{splitmix64, value_noise};
use crate::prefilter::RoiRect;

fn default_cell() -> f64 {
    6.0
}

/// Complete description of a scene. The same spec always generates the same
/// bytes. The scene seed is folded into every texture seed, so textures only
/// repeat across scenes that share both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    pub background: BackgroundSpec,
    #[serde(default)]
    pub sprites: Vec<SpriteSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    #[serde(default)]
    pub seed: u64,
    /// Intensity levels the noise field maps onto; equal ends give a flat
    /// background.
    pub intensity: (u8, u8),
    /// Whole-background translation in px/frame.
    #[serde(default)]
    pub drift: (f64, f64),
    /// Noise lattice spacing in px.
    #[serde(default = "default_cell")]
    pub cell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpriteShape {
    Rect,
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpriteSpec {
    /// Rectangle filling its box, or the inscribed ellipse.
    pub shape: SpriteShape,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
    pub intensity: (u8, u8),
    #[serde(default = "default_cell")]
    pub cell: f64,
    /// Top-left corner of the sprite box at frame 0, real-valued px.
    pub start: (f64, f64),
    /// Constant displacement per frame; exactly one of this or `steps`.
    #[serde(default)]
    pub velocity: Option<(f64, f64)>,
    /// Explicit displacement for each frame transition; needs at least
    /// frames-1 entries.
    #[serde(default)]
    pub steps: Option<Vec<(f64, f64)>>,
}

/// Generated sequence with its ground truth, all indexed by frame. Masks and
/// boxes come from positions rounded to whole pixels, so a rigidly moving
/// sprite keeps a constant mask area. `flows[t]` is the exact displacement
/// from frame `t` to `t+1`: the sprite's step inside its frame-`t` mask, the
/// background drift everywhere else.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<LumaFrame>,
    pub masks: Vec<BinaryImage>,
    pub boxes: Vec<Vec<RoiRect>>,
    pub flows: Vec<FlowField>,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene needs positive dimensions and frame count, got {width}x{height}, {frames} frames")]
    EmptyScene { width: usize, height: usize, frames: usize },
    #[error("background: {what}")]
    BadBackground { what: String },
    #[error("sprite {index}: {what}")]
    BadSprite { index: usize, what: String },
    #[error("sprite {index} has no pixel inside the frame at frame {frame}")]
    SpriteOutOfBounds { index: usize, frame: usize },
}

/// Renders every frame of `spec` along with its ground truth.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene, SceneError> {
    if spec.width == 0 || spec.height == 0 || spec.frames == 0 {
        return Err(SceneError::EmptyScene {
            width: spec.width,
            height: spec.height,
            frames: spec.frames,
        });
    }
    let bg = &spec.background;
    if bg.intensity.0 > bg.intensity.1 {
        return Err(SceneError::BadBackground { what: "intensity range is reversed".into() });
    }
    if !bg.cell.is_finite() || bg.cell <= 0.0 {
        return Err(SceneError::BadBackground { what: "noise cell must be finite and positive".into() });
    }

    let mut steps = Vec::with_capacity(spec.sprites.len());
    let mut positions = Vec::with_capacity(spec.sprites.len());
    for (index, sprite) in spec.sprites.iter().enumerate() {
        let bad = |what: &str| SceneError::BadSprite { index, what: what.into() };
        if sprite.width == 0 || sprite.height == 0 {
            return Err(bad("width and height must be at least 1"));
        }
        if sprite.intensity.0 > sprite.intensity.1 {
            return Err(bad("intensity range is reversed"));
        }
        if !sprite.cell.is_finite() || sprite.cell <= 0.0 {
            return Err(bad("noise cell must be finite and positive"));
        }
        let resolved = resolved_steps(sprite, index, spec.frames)?;
        if !(sprite.start.0.is_finite() && sprite.start.1.is_finite())
            || resolved.iter().any(|s| !(s.0.is_finite() && s.1.is_finite()))
        {
            return Err(bad("start and steps must be finite"));
        }

        let mut track = Vec::with_capacity(spec.frames);
        let mut pos = sprite.start;
        track.push(pos);
        for &(dx, dy) in &resolved {
            pos = (pos.0 + dx, pos.1 + dy);
            track.push(pos);
        }
        for (frame, &p) in track.iter().enumerate() {
            if clipped_box(p, sprite.width, sprite.height, spec.width, spec.height).is_none() {
                return Err(SceneError::SpriteOutOfBounds { index, frame });
            }
        }
        steps.push(resolved);
        positions.push(track);
    }

    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    let mut boxes = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        frames.push(render_frame(spec, &positions, t));
        let mut mask = BinaryImage::new(spec.height, spec.width);
        let mut frame_boxes = Vec::with_capacity(spec.sprites.len());
        for (sprite, track) in spec.sprites.iter().zip(&positions) {
            let rect = clipped_box(track[t], sprite.width, sprite.height, spec.width, spec.height)
                .expect("bounds checked above");
            stamp_mask(sprite, track[t], &rect, |x, y| mask.set(y, x, 1));
            frame_boxes.push(rect);
        }
        masks.push(mask);
        boxes.push(frame_boxes);
    }

    let mut flows = Vec::with_capacity(spec.frames.saturating_sub(1));
    for t in 0..spec.frames - 1 {
        let n = spec.width * spec.height;
        let mut flow = FlowField::from_vecs(
            spec.width,
            spec.height,
            vec![bg.drift.0 as f32; n],
            vec![bg.drift.1 as f32; n],
        );
        for ((sprite, track), sprite_steps) in spec.sprites.iter().zip(&positions).zip(&steps) {
            let rect = clipped_box(track[t], sprite.width, sprite.height, spec.width, spec.height)
                .expect("bounds checked above");
            let (dx, dy) = sprite_steps[t];
            stamp_mask(sprite, track[t], &rect, |x, y| flow.set(x, y, dx as f32, dy as f32));
        }
        flows.push(flow);
    }

    Ok(Scene { frames, masks, boxes, flows })
}

fn resolved_steps(
    sprite: &SpriteSpec,
    index: usize,
    frames: usize,
) -> Result<Vec<(f64, f64)>, SceneError> {
    match (&sprite.velocity, &sprite.steps) {
        (Some(v), None) => Ok(vec![*v; frames - 1]),
        (None, Some(steps)) => {
            if steps.len() + 1 < frames {
                return Err(SceneError::BadSprite {
                    index,
                    what: format!(
                        "{} steps cover only {} frames, need {frames}",
                        steps.len(),
                        steps.len() + 1
                    ),
                });
            }
            Ok(steps[..frames - 1].to_vec())
        }
        (Some(_), Some(_)) => Err(SceneError::BadSprite {
            index,
            what: "velocity and steps are mutually exclusive".into(),
        }),
        (None, None) => {
            Err(SceneError::BadSprite { index, what: "needs velocity or steps".into() })
        }
    }
}

/// The sprite's box at a rounded position, clipped to the frame. `None` when
/// no pixel of it lands inside.
fn clipped_box(pos: (f64, f64), w: usize, h: usize, fw: usize, fh: usize) -> Option<RoiRect> {
    let rx = pos.0.round() as i64;
    let ry = pos.1.round() as i64;
    let x0 = rx.max(0);
    let y0 = ry.max(0);
    let x1 = (rx + w as i64).min(fw as i64);
    let y1 = (ry + h as i64).min(fh as i64);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    Some(RoiRect::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize))
}

/// Calls `set` for every mask pixel of a sprite whose rounded position gave
/// the clipped box `rect`.
fn stamp_mask(
    sprite: &SpriteSpec,
    pos: (f64, f64),
    rect: &RoiRect,
    mut set: impl FnMut(usize, usize),
) {
    let rpos = (pos.0.round(), pos.1.round());
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            let keep = match sprite.shape {
                SpriteShape::Rect => true,
                SpriteShape::Disk => in_ellipse(
                    x as f64 + 0.5,
                    y as f64 + 0.5,
                    rpos,
                    sprite.width as f64,
                    sprite.height as f64,
                ),
            };
            if keep {
                set(x, y);
            }
        }
    }
}

fn in_ellipse(px: f64, py: f64, pos: (f64, f64), w: f64, h: f64) -> bool {
    let nx = (px - (pos.0 + w / 2.0)) / (w / 2.0);
    let ny = (py - (pos.1 + h / 2.0)) / (h / 2.0);
    nx * nx + ny * ny <= 1.0
}

fn render_frame(spec: &SceneSpec, positions: &[Vec<(f64, f64)>], t: usize) -> LumaFrame {
    let salt = splitmix64(spec.seed);
    let bg = &spec.background;
    let (lo, hi) = (bg.intensity.0 as f64, bg.intensity.1 as f64);
    let off_x = t as f64 * bg.drift.0;
    let off_y = t as f64 * bg.drift.1;

    let mut buf = vec![lo; spec.width * spec.height];
    if hi > lo {
        for y in 0..spec.height {
            for x in 0..spec.width {
                let v = value_noise(
                    salt ^ bg.seed,
                    x as f64 + 0.5 - off_x,
                    y as f64 + 0.5 - off_y,
                    bg.cell,
                );
                buf[y * spec.width + x] = lo + v * (hi - lo);
            }
        }
    }
    for (sprite, track) in spec.sprites.iter().zip(positions) {
        composite_sprite(&mut buf, spec.width, spec.height, sprite, track[t], salt);
    }

    let data = buf.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    LumaFrame::from_vec(spec.width, spec.height, data)
}

/// Blends a sprite over the buffer at its real-valued position. Rectangles
/// use exact pixel coverage, ellipses a 4x4 subsample estimate, so edges
/// stay meaningful at fractional positions.
fn composite_sprite(
    buf: &mut [f64],
    fw: usize,
    fh: usize,
    sprite: &SpriteSpec,
    pos: (f64, f64),
    salt: u64,
) {
    let (sx, sy) = pos;
    let (sw, sh) = (sprite.width as f64, sprite.height as f64);
    let ix0 = sx.floor().max(0.0) as usize;
    let iy0 = sy.floor().max(0.0) as usize;
    let ix1 = (sx + sw).ceil().min(fw as f64).max(0.0) as usize;
    let iy1 = (sy + sh).ceil().min(fh as f64).max(0.0) as usize;
    let (lo, hi) = (sprite.intensity.0 as f64, sprite.intensity.1 as f64);
    let seed = salt ^ sprite.seed;

    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            let c = match sprite.shape {
                SpriteShape::Rect => {
                    let ox = (sx + sw).min(ix as f64 + 1.0) - sx.max(ix as f64);
                    let oy = (sy + sh).min(iy as f64 + 1.0) - sy.max(iy as f64);
                    ox.max(0.0) * oy.max(0.0)
                }
                SpriteShape::Disk => {
                    let mut inside = 0;
                    for ky in 0..4 {
                        for kx in 0..4 {
                            let px = ix as f64 + (kx as f64 + 0.5) / 4.0;
                            let py = iy as f64 + (ky as f64 + 0.5) / 4.0;
                            inside += in_ellipse(px, py, pos, sw, sh) as u32;
                        }
                    }
                    inside as f64 / 16.0
                }
            };
            if c <= 0.0 {
                continue;
            }
            let tex = if hi > lo {
                let v = value_noise(seed, ix as f64 + 0.5 - sx, iy as f64 + 0.5 - sy, sprite.cell);
                lo + v * (hi - lo)
            } else {
                lo
            };
            let p = &mut buf[iy * fw + ix];
            *p += c * (tex - *p);
        }
    }
}

/// Renders a mask as an 8-bit frame, 255 where the bit is set.
pub fn mask_to_frame(mask: &BinaryImage) -> LumaFrame {
    let data = mask.bits().iter().map(|&b| if b == 1 { 255 } else { 0 }).collect();
    LumaFrame::from_vec(mask.cols(), mask.rows(), data)
}

/// Reads a mask back from an 8-bit frame; any nonzero pixel is set.
pub fn frame_to_mask(frame: &LumaFrame) -> BinaryImage {
    let bits = frame.as_slice().iter().map(|&v| (v != 0) as u8).collect();
    BinaryImage::from_vec(frame.height(), frame.width(), bits)
}

/// Writes a scene under `dir`: `frames/fNNNN.pgm`, `gt_masks/mNNNN.pgm`
/// (0/255), `gt_flow/NNNN.flo` for each frame pair, and `gt_boxes.txt` with
/// one `frame x y w h` line per sprite per frame.
pub fn write_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<(), FormatError> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    let masks_dir = dir.join("gt_masks");
    let flow_dir = dir.join("gt_flow");
    for d in [&frames_dir, &masks_dir, &flow_dir] {
        fs::create_dir_all(d)
            .map_err(|e| FormatError::Io { path: d.clone(), source: e })?;
    }
    for (t, frame) in scene.frames.iter().enumerate() {
        io::write_pgm(frame, frames_dir.join(format!("f{t:04}.pgm")))?;
    }
    for (t, mask) in scene.masks.iter().enumerate() {
        io::write_pgm(&mask_to_frame(mask), masks_dir.join(format!("m{t:04}.pgm")))?;
    }
    for (t, flow) in scene.flows.iter().enumerate() {
        io::write_flo(flow, flow_dir.join(format!("{t:04}.flo")))?;
    }
    let mut flat = Vec::new();
    for (t, frame_boxes) in scene.boxes.iter().enumerate() {
        for &rect in frame_boxes {
            flat.push((t, rect));
        }
    }
    io::write_gt_boxes(&flat, dir.join("gt_boxes.txt"))
}

/// Where to watch the [`enter_leave_scene`] sequence: the sensor cell the
/// sprite sweeps through and the binning that produces it. `entry_frame` is
/// the first frame where the sprite covers the whole cell, `exit_frame` the
/// first where the cell shows background again.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnterLeaveProbe {
    pub bin_rows: usize,
    pub bin_cols: usize,
    pub cell_row: usize,
    pub cell_col: usize,
    pub entry_frame: usize,
    pub exit_frame: usize,
}

/// A bright uniform square crossing a noisy static background, sized so one
/// 20x20 sensor cell goes background -> fully covered -> background. The
/// covered stretch changes nothing between frames, so the cell's drive is a
/// set pulse at entry, reset pulses while covered, a set pulse at exit, and
/// reset pulses after.
pub fn enter_leave_scene() -> (SceneSpec, EnterLeaveProbe) {
    let spec = SceneSpec {
        width: 320,
        height: 200,
        frames: 11,
        seed: 9,
        background: BackgroundSpec {
            seed: 1,
            intensity: (20, 120),
            drift: (0.0, 0.0),
            cell: 6.0,
        },
        sprites: vec![SpriteSpec {
            shape: SpriteShape::Rect,
            width: 40,
            height: 40,
            seed: 2,
            intensity: (230, 230),
            cell: 6.0,
            start: (60.0, 95.0),
            velocity: Some((20.0, 0.0)),
            steps: None,
        }],
    };
    let probe = EnterLeaveProbe {
        bin_rows: 20,
        bin_cols: 20,
        cell_row: 5,
        cell_col: 8,
        entry_frame: 4,
        exit_frame: 6,
    };
    (spec, probe)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_spec() -> SceneSpec {
        SceneSpec {
            width: 100,
            height: 80,
            frames: 4,
            seed: 3,
            background: BackgroundSpec {
                seed: 1,
                intensity: (30, 200),
                drift: (0.0, 0.0),
                cell: 5.0,
            },
            sprites: Vec::new(),
        }
    }

    fn rect_sprite(start: (f64, f64), velocity: (f64, f64)) -> SpriteSpec {
        SpriteSpec {
            shape: SpriteShape::Rect,
            width: 20,
            height: 16,
            seed: 2,
            intensity: (230, 230),
            cell: 6.0,
            start,
            velocity: Some(velocity),
            steps: None,
        }
    }

    #[test]
    fn static_scene_repeats_one_frame_with_zero_flow() {
        let scene = gen_scene(&plain_spec()).unwrap();
        assert_eq!(scene.frames.len(), 4);
        assert_eq!(scene.flows.len(), 3);
        for frame in &scene.frames[1..] {
            assert_eq!(frame, &scene.frames[0]);
        }
        for flow in &scene.flows {
            assert!(flow.u().iter().chain(flow.v()).all(|&c| c == 0.0));
        }
        for mask in &scene.masks {
            assert_eq!(mask.count_ones(), 0);
        }
        assert!(scene.boxes.iter().all(Vec::is_empty));
    }

    #[test]
    fn integer_velocity_advances_boxes_by_the_step() {
        let mut spec = plain_spec();
        spec.frames = 5;
        spec.sprites.push(rect_sprite((10.0, 12.0), (3.0, 0.0)));
        let scene = gen_scene(&spec).unwrap();
        for (t, frame_boxes) in scene.boxes.iter().enumerate() {
            assert_eq!(frame_boxes[0], RoiRect::new(10 + 3 * t, 12, 20, 16));
        }
    }

    #[test]
    fn identical_specs_give_byte_identical_files() {
        let mut spec = plain_spec();
        spec.background.drift = (0.5, -0.25);
        spec.sprites.push(rect_sprite((10.5, 12.25), (2.5, 1.5)));

        let a = gen_scene(&spec).unwrap();
        let b = gen_scene(&spec).unwrap();
        assert_eq!(a.frames, b.frames);

        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_scene(&a, dir_a.path()).unwrap();
        write_scene(&b, dir_b.path()).unwrap();
        for rel in ["frames/f0002.pgm", "gt_masks/m0002.pgm", "gt_flow/0002.flo", "gt_boxes.txt"] {
            let bytes_a = fs::read(dir_a.path().join(rel)).unwrap();
            let bytes_b = fs::read(dir_b.path().join(rel)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{rel} differs between runs");
        }
    }

    #[test]
    fn mask_area_stays_constant_under_fractional_motion() {
        for shape in [SpriteShape::Rect, SpriteShape::Disk] {
            let mut spec = plain_spec();
            spec.frames = 6;
            let mut sprite = rect_sprite((30.3, 20.7), (1.3, 0.6));
            sprite.shape = shape;
            sprite.width = 21;
            sprite.height = 21;
            spec.sprites.push(sprite);
            let scene = gen_scene(&spec).unwrap();
            let area = scene.masks[0].count_ones();
            assert!(area > 0);
            for (t, mask) in scene.masks.iter().enumerate() {
                assert_eq!(mask.count_ones(), area, "{shape:?} area changed at frame {t}");
            }
        }
    }

    #[test]
    fn disk_masks_are_round() {
        let mut spec = plain_spec();
        let mut sprite = rect_sprite((40.0, 30.0), (0.0, 0.0));
        sprite.shape = SpriteShape::Disk;
        sprite.width = 20;
        sprite.height = 20;
        spec.sprites.push(sprite);
        let scene = gen_scene(&spec).unwrap();

        let mask = &scene.masks[0];
        assert_eq!(mask.get(40, 50), 1, "center not set");
        assert_eq!(mask.get(30, 40), 0, "box corner set");
        let area = mask.count_ones() as f64;
        assert!(area > 0.70 * 400.0 && area < 0.85 * 400.0, "area {area}");
    }

    #[test]
    fn flow_is_sprite_step_inside_and_drift_outside() {
        let mut spec = plain_spec();
        spec.background.drift = (0.25, -0.5);
        spec.sprites.push(rect_sprite((10.0, 12.0), (2.0, 1.0)));
        let scene = gen_scene(&spec).unwrap();

        let flow = &scene.flows[0];
        assert_eq!(flow.get(15, 15), (2.0, 1.0));
        assert_eq!(flow.get(90, 70), (0.25, -0.5));
    }

    #[test]
    fn explicit_steps_integrate_to_the_position_delta() {
        let steps = vec![(1.5, 0.0), (0.5, 1.0), (-2.0, 0.25)];
        let mut spec = plain_spec();
        let mut sprite = rect_sprite((30.0, 25.0), (0.0, 0.0));
        sprite.velocity = None;
        sprite.steps = Some(steps.clone());
        spec.sprites.push(sprite);
        let scene = gen_scene(&spec).unwrap();

        let mut pos = (30.0, 25.0);
        for (t, &(dx, dy)) in steps.iter().enumerate() {
            let rect = scene.boxes[t][0];
            let cx = rect.x + rect.w / 2;
            let cy = rect.y + rect.h / 2;
            assert_eq!(scene.flows[t].get(cx, cy), (dx as f32, dy as f32));
            pos = (pos.0 + dx, pos.1 + dy);
            let next = scene.boxes[t + 1][0];
            assert_eq!((next.x, next.y), (pos.0.round() as usize, pos.1.round() as usize));
        }
    }

    #[test]
    fn sprites_must_keep_a_pixel_in_frame() {
        let mut spec = plain_spec();
        spec.sprites.push(rect_sprite((-50.0, 10.0), (0.0, 0.0)));
        assert!(matches!(
            gen_scene(&spec),
            Err(SceneError::SpriteOutOfBounds { index: 0, frame: 0 })
        ));

        let mut spec = plain_spec();
        spec.sprites.push(rect_sprite((70.0, 10.0), (15.0, 0.0)));
        assert!(matches!(
            gen_scene(&spec),
            Err(SceneError::SpriteOutOfBounds { index: 0, frame: 2 })
        ));
    }

    #[test]
    fn trajectory_must_be_exactly_one_of_velocity_or_steps() {
        let mut spec = plain_spec();
        let mut sprite = rect_sprite((10.0, 10.0), (1.0, 0.0));
        sprite.steps = Some(vec![(1.0, 0.0); 3]);
        spec.sprites.push(sprite);
        assert!(matches!(gen_scene(&spec), Err(SceneError::BadSprite { index: 0, .. })));

        let mut spec = plain_spec();
        let mut sprite = rect_sprite((10.0, 10.0), (1.0, 0.0));
        sprite.velocity = None;
        spec.sprites.push(sprite);
        assert!(matches!(gen_scene(&spec), Err(SceneError::BadSprite { index: 0, .. })));

        let mut spec = plain_spec();
        let mut sprite = rect_sprite((10.0, 10.0), (1.0, 0.0));
        sprite.velocity = None;
        sprite.steps = Some(vec![(1.0, 0.0); 2]);
        spec.sprites.push(sprite);
        let err = gen_scene(&spec).unwrap_err();
        assert!(err.to_string().contains("cover only 3 frames"), "{err}");
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let (spec, _) = enter_leave_scene();
        let text = toml::to_string(&spec).unwrap();
        let back: SceneSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn spec_parses_from_plain_toml() {
        let text = "\
width = 64
height = 48
frames = 3
seed = 5

[background]
seed = 1
intensity = [30, 200]
cell = 4.0

[[sprites]]
shape = \"rect\"
width = 10
height = 8
seed = 2
intensity = [240, 240]
start = [5.0, 6.0]
velocity = [2.0, 0.0]
";
        let spec: SceneSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.background.drift, (0.0, 0.0));
        assert_eq!(spec.sprites[0].cell, 6.0);
        assert_eq!(spec.sprites[0].shape, SpriteShape::Rect);
        gen_scene(&spec).unwrap();
    }

    #[test]
    fn written_layout_reads_back() {
        let mut spec = plain_spec();
        spec.sprites.push(rect_sprite((10.0, 12.0), (3.0, 1.0)));
        let scene = gen_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(&scene, dir.path()).unwrap();

        let frames = io::load_sequence(dir.path().join("frames"), "f*.pgm").unwrap();
        assert_eq!(frames, scene.frames);
        let mask0 = frame_to_mask(&io::read_pgm(dir.path().join("gt_masks/m0000.pgm")).unwrap());
        assert_eq!(mask0, scene.masks[0]);
        let flow0 = io::read_flo(dir.path().join("gt_flow/0000.flo")).unwrap();
        assert_eq!(flow0, scene.flows[0]);
        let boxes = io::read_gt_boxes(dir.path().join("gt_boxes.txt")).unwrap();
        assert_eq!(boxes.len(), 4);
        assert_eq!(boxes[2], (2, scene.boxes[2][0]));
    }

    #[test]
    fn probe_cell_sees_sprite_only_between_entry_and_exit() {
        let (spec, probe) = enter_leave_scene();
        let scene = gen_scene(&spec).unwrap();
        assert_eq!(spec.width % probe.bin_cols, 0);
        assert_eq!(spec.height % probe.bin_rows, 0);

        let x0 = probe.cell_col * probe.bin_cols;
        let y0 = probe.cell_row * probe.bin_rows;
        for (t, frame) in scene.frames.iter().enumerate() {
            let covered = t >= probe.entry_frame && t < probe.exit_frame;
            for y in y0..y0 + probe.bin_rows {
                for x in x0..x0 + probe.bin_cols {
                    let v = frame.get(x, y);
                    if covered {
                        assert_eq!(v, 230, "frame {t} px ({x},{y})");
                    } else {
                        assert!(v <= 120, "frame {t} px ({x},{y}) = {v}");
                    }
                }
            }
        }
    }
}
