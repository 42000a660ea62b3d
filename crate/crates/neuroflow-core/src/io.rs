//! File formats: binary PGM (P5) frames, little-endian `.flo` displacement
//! fields, and numbered frame sequences.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::frame::{FlowField, LumaFrame};
use crate::prefilter::{RoiRect, RoiSet};
use crate::tasks::TrackBox;

/// Magic number opening every `.flo` file, stored as a little-endian f32.
pub const FLO_MAGIC: f32 = 202021.25;

/// Errors for frame, field, and sequence files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: unsupported magic {found:?}, expected \"P5\"", path.display())]
    UnsupportedFormat { path: PathBuf, found: String },
    #[error("{}: maxval {maxval} unsupported, expected 255", path.display())]
    UnsupportedMaxval { path: PathBuf, maxval: u64 },
    #[error("{}: malformed header: {what}", path.display())]
    MalformedHeader { path: PathBuf, what: String },
    #[error("{}: payload holds {got} bytes, header implies {expected}", path.display())]
    PayloadLength { path: PathBuf, expected: usize, got: usize },
    #[error("{}: bad flow magic {found}, expected {FLO_MAGIC}", path.display())]
    BadMagic { path: PathBuf, found: f32 },
    #[error("{}: non-finite flow component at index {index}", path.display())]
    NonFinite { path: PathBuf, index: usize },
    #[error("pattern {pattern:?} must contain exactly one '*'")]
    InvalidPattern { pattern: String },
    #[error("no files matching {pattern:?} in {}", dir.display())]
    EmptySequence { dir: PathBuf, pattern: String },
    #[error("{}: frame is {w}x{h} but the sequence started at {first_w}x{first_h}", path.display())]
    MixedDimensions { path: PathBuf, w: usize, h: usize, first_w: usize, first_h: usize },
    #[error("{}:{line}: {what}", path.display())]
    MalformedLine { path: PathBuf, line: usize, what: String },
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io { path: path.to_path_buf(), source }
}

/// Reads a binary PGM (P5, maxval 255) frame.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<LumaFrame, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut pos = 0;

    let magic = next_header_token(&bytes, &mut pos).ok_or_else(|| FormatError::MalformedHeader {
        path: path.to_path_buf(),
        what: "missing magic".into(),
    })?;
    if magic != "P5" {
        return Err(FormatError::UnsupportedFormat { path: path.to_path_buf(), found: magic });
    }

    let width = parse_header_number(&bytes, &mut pos, path, "width")?;
    let height = parse_header_number(&bytes, &mut pos, path, "height")?;
    let maxval = parse_header_number(&bytes, &mut pos, path, "maxval")?;
    if maxval != 255 {
        return Err(FormatError::UnsupportedMaxval { path: path.to_path_buf(), maxval });
    }
    if width == 0 || height == 0 {
        return Err(FormatError::MalformedHeader {
            path: path.to_path_buf(),
            what: format!("zero dimension {width}x{height}"),
        });
    }

    // Exactly one whitespace byte separates the maxval from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FormatError::MalformedHeader {
            path: path.to_path_buf(),
            what: "missing separator before payload".into(),
        });
    }
    pos += 1;

    let expected = (width as usize) * (height as usize);
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(FormatError::PayloadLength {
            path: path.to_path_buf(),
            expected,
            got: payload.len(),
        });
    }
    Ok(LumaFrame::from_vec(width as usize, height as usize, payload.to_vec()))
}

/// Writes a frame as binary PGM: `P5\n{w} {h}\n255\n` followed by the payload.
pub fn write_pgm(frame: &LumaFrame, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(32 + frame.as_slice().len());
    write!(out, "P5\n{} {}\n255\n", frame.width(), frame.height()).expect("vec write");
    out.extend_from_slice(frame.as_slice());
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a little-endian `.flo` displacement field.
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 {
        return Err(FormatError::MalformedHeader {
            path: path.to_path_buf(),
            what: format!("file holds {} bytes, header needs 12", bytes.len()),
        });
    }

    let magic = f32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if magic != FLO_MAGIC {
        return Err(FormatError::BadMagic { path: path.to_path_buf(), found: magic });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let height = i32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if width < 1 || height < 1 {
        return Err(FormatError::MalformedHeader {
            path: path.to_path_buf(),
            what: format!("non-positive dimensions {width}x{height}"),
        });
    }

    let (width, height) = (width as usize, height as usize);
    let expected = width * height * 8;
    if bytes.len() - 12 != expected {
        return Err(FormatError::PayloadLength {
            path: path.to_path_buf(),
            expected,
            got: bytes.len() - 12,
        });
    }

    let mut u = Vec::with_capacity(width * height);
    let mut v = Vec::with_capacity(width * height);
    for i in 0..width * height {
        let off = 12 + i * 8;
        let cu = f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
        let cv = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().expect("4 bytes"));
        if !cu.is_finite() || !cv.is_finite() {
            return Err(FormatError::NonFinite { path: path.to_path_buf(), index: i });
        }
        u.push(cu);
        v.push(cv);
    }
    Ok(FlowField::from_vecs(width, height, u, v))
}

/// Writes a displacement field as little-endian `.flo`: magic, i32 width,
/// i32 height, then interleaved (u, v) f32 pairs in row-major order.
pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let n = field.width() * field.height();
    let mut out = Vec::with_capacity(12 + n * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width() as i32).to_le_bytes());
    out.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for i in 0..n {
        out.extend_from_slice(&field.u()[i].to_le_bytes());
        out.extend_from_slice(&field.v()[i].to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Loads every PGM in `dir` whose name matches `pattern` (one `*` wildcard),
/// ordered by the numeric index embedded in the wildcard match.
///
/// Names whose wildcard match carries no digits sort after numbered ones,
/// lexicographically. All frames must share one dimension pair.
pub fn load_sequence(dir: impl AsRef<Path>, pattern: &str) -> Result<Vec<LumaFrame>, FormatError> {
    let dir = dir.as_ref();
    let stars = pattern.matches('*').count();
    if stars != 1 {
        return Err(FormatError::InvalidPattern { pattern: pattern.to_string() });
    }
    let (prefix, suffix) = pattern.split_once('*').expect("one star");

    let mut matched: Vec<(u64, String)> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = match entry.file_name().into_string() {
            Ok(name) => name,
            Err(_) => continue,
        };
        if name.len() < prefix.len() + suffix.len()
            || !name.starts_with(prefix)
            || !name.ends_with(suffix)
        {
            continue;
        }
        let infix = &name[prefix.len()..name.len() - suffix.len()];
        matched.push((numeric_index(infix), name));
    }
    if matched.is_empty() {
        return Err(FormatError::EmptySequence {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    matched.sort();

    let mut frames = Vec::with_capacity(matched.len());
    for (_, name) in &matched {
        let path = dir.join(name);
        let frame = read_pgm(&path)?;
        if let Some(first) = frames.first() {
            let first: &LumaFrame = first;
            if frame.width() != first.width() || frame.height() != first.height() {
                return Err(FormatError::MixedDimensions {
                    path,
                    w: frame.width(),
                    h: frame.height(),
                    first_w: first.width(),
                    first_h: first.height(),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes regions as text, one `x y w h` line per rectangle.
pub fn write_rois(rois: &[RoiRect], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in rois {
        out.push_str(&format!("{} {} {} {}\n", r.x, r.y, r.w, r.h));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads `x y w h` lines back into a region list; blank lines are skipped.
pub fn read_rois(path: impl AsRef<Path>) -> Result<RoiSet, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rois = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(path, lineno, line, 4)?;
        rois.push(parse_rect(path, lineno, &fields)?);
    }
    Ok(rois)
}

/// Writes detections as text, one `x y w h score` line per box.
pub fn write_track_boxes(boxes: &[TrackBox], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            b.rect.x, b.rect.y, b.rect.w, b.rect.h, b.score
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads `x y w h score` lines back into detections.
pub fn read_track_boxes(path: impl AsRef<Path>) -> Result<Vec<TrackBox>, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(path, lineno, line, 5)?;
        let rect = parse_rect(path, lineno, &fields[..4])?;
        let score: f64 = parse_number(path, lineno, "score", fields[4])?;
        if !score.is_finite() || score < 0.0 {
            return Err(FormatError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                what: format!("score {score} must be finite and >= 0"),
            });
        }
        boxes.push(TrackBox { rect, score });
    }
    Ok(boxes)
}

/// Writes per-frame ground-truth boxes as `frame x y w h` lines.
pub fn write_gt_boxes(boxes: &[(usize, RoiRect)], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut out = String::new();
    for (frame, r) in boxes {
        out.push_str(&format!("{frame} {} {} {} {}\n", r.x, r.y, r.w, r.h));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads `frame x y w h` lines back into (frame, rect) pairs in file order.
pub fn read_gt_boxes(path: impl AsRef<Path>) -> Result<Vec<(usize, RoiRect)>, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(path, lineno, line, 5)?;
        let frame: usize = parse_number(path, lineno, "frame", fields[0])?;
        boxes.push((frame, parse_rect(path, lineno, &fields[1..])?));
    }
    Ok(boxes)
}

fn split_line<'a>(
    path: &Path,
    lineno: usize,
    line: &'a str,
    want: usize,
) -> Result<Vec<&'a str>, FormatError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != want {
        return Err(FormatError::MalformedLine {
            path: path.to_path_buf(),
            line: lineno + 1,
            what: format!("expected {want} fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_number<T: std::str::FromStr>(
    path: &Path,
    lineno: usize,
    what: &str,
    token: &str,
) -> Result<T, FormatError> {
    token.parse().map_err(|_| FormatError::MalformedLine {
        path: path.to_path_buf(),
        line: lineno + 1,
        what: format!("{what} is not a number: {token:?}"),
    })
}

fn parse_rect(path: &Path, lineno: usize, fields: &[&str]) -> Result<RoiRect, FormatError> {
    let x: usize = parse_number(path, lineno, "x", fields[0])?;
    let y: usize = parse_number(path, lineno, "y", fields[1])?;
    let w: usize = parse_number(path, lineno, "w", fields[2])?;
    let h: usize = parse_number(path, lineno, "h", fields[3])?;
    if w < 1 || h < 1 {
        return Err(FormatError::MalformedLine {
            path: path.to_path_buf(),
            line: lineno + 1,
            what: format!("degenerate rectangle {w}x{h}"),
        });
    }
    Ok(RoiRect::new(x, y, w, h))
}

/// Value of the last digit run in `s`, or `u64::MAX` when there is none
/// (so unnumbered names sort last) or the run overflows.
fn numeric_index(s: &str) -> u64 {
    let mut last: Option<u64> = None;
    let mut current: Option<u64> = None;
    for c in s.chars() {
        if let Some(d) = c.to_digit(10) {
            let next = current
                .unwrap_or(0)
                .checked_mul(10)
                .and_then(|n| n.checked_add(d as u64))
                .unwrap_or(u64::MAX);
            current = Some(next);
        } else if current.is_some() {
            last = current.take();
        }
    }
    current.or(last).unwrap_or(u64::MAX)
}

/// Skips whitespace and `#` comments, then returns the next header token.
fn next_header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    } else {
        None
    }
}

fn parse_header_number(
    bytes: &[u8],
    pos: &mut usize,
    path: &Path,
    what: &str,
) -> Result<u64, FormatError> {
    let token = next_header_token(bytes, pos).ok_or_else(|| FormatError::MalformedHeader {
        path: path.to_path_buf(),
        what: format!("missing {what}"),
    })?;
    token.parse().map_err(|_| FormatError::MalformedHeader {
        path: path.to_path_buf(),
        what: format!("{what} is not a number: {token:?}"),
    })
}
