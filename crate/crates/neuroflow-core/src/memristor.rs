//! Behavioral memristor model and array: signed pulses push a bounded state
//! toward the low- or high-resistance rail, and thresholded states form the
//! binary motion pattern.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::LumaFrame;
use crate::grid::BinaryImage;
use crate::io::{self, FormatError};
use crate::sensor::{bin_frame, modulate, sensory_voltage, BinConfig, ModulationConfig, SensorError};

/// Binary motion pattern read from the array: 1 = moving (low resistance),
/// 0 = static.
pub type MotionPattern = BinaryImage;

/// Device constants for the rate-based two-rail state model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemristorParams {
    /// Approach rate toward the low-resistance rail, 1/(V·s).
    pub alpha_set: f64,
    /// Approach rate toward the high-resistance rail, 1/(V·s).
    pub alpha_reset: f64,
    /// Conductance at state 1, siemens.
    pub g_on: f64,
    /// Conductance at state 0, siemens.
    pub g_off: f64,
    /// State at or above which a cell reads as moving, in (0, 1).
    pub read_threshold: f64,
    /// Duration of one modulation pulse, seconds.
    pub pulse_width: f64,
}

impl Default for MemristorParams {
    fn default() -> Self {
        MemristorParams {
            alpha_set: 20.0,
            alpha_reset: 20.0,
            g_on: 1e-4,
            g_off: 1e-6,
            read_threshold: 0.5,
            pulse_width: 1.0,
        }
    }
}

impl MemristorParams {
    pub fn validate(&self) -> Result<(), MemristorError> {
        if !(self.alpha_set > 0.0 && self.alpha_reset > 0.0) {
            return Err(MemristorError::InvalidParams {
                what: format!(
                    "rates alpha_set={}, alpha_reset={} must be > 0",
                    self.alpha_set, self.alpha_reset
                ),
            });
        }
        if !(self.read_threshold > 0.0 && self.read_threshold < 1.0) {
            return Err(MemristorError::InvalidParams {
                what: format!("read_threshold {} must lie in (0, 1)", self.read_threshold),
            });
        }
        if !(self.g_on > self.g_off && self.g_off > 0.0) {
            return Err(MemristorError::InvalidParams {
                what: format!("need g_on > g_off > 0, got g_on={}, g_off={}", self.g_on, self.g_off),
            });
        }
        if !self.pulse_width.is_finite() || self.pulse_width <= 0.0 {
            return Err(MemristorError::InvalidParams {
                what: format!("pulse_width {} must be finite and > 0", self.pulse_width),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MemristorError {
    #[error("pulse voltage is not finite")]
    NonFiniteVoltage,
    #[error("array {rows}x{cols} with {n}x{m} units needs {need_w}x{need_h} frames, got {got_w}x{got_h}")]
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
    #[error("invalid device parameters: {what}")]
    InvalidParams { what: String },
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

/// Applies one signed voltage pulse to a device state.
///
/// Positive pulses move the state toward 1 at a rate shrinking with the
/// remaining headroom; negative pulses move it toward 0 in proportion to the
/// state itself; zero leaves it unchanged. The result is clamped to [0, 1].
pub fn apply_pulse(s: f64, v: f64, params: &MemristorParams) -> Result<f64, MemristorError> {
    if !v.is_finite() {
        return Err(MemristorError::NonFiniteVoltage);
    }
    debug_assert!((0.0..=1.0).contains(&s), "state out of range: {s}");
    let next = if v > 0.0 {
        s + params.alpha_set * v * params.pulse_width * (1.0 - s)
    } else if v < 0.0 {
        s + params.alpha_reset * v * params.pulse_width * s
    } else {
        s
    };
    Ok(next.clamp(0.0, 1.0))
}

/// Ohmic readout current: conductance interpolates linearly between
/// `g_off` (state 0) and `g_on` (state 1).
pub fn device_current(s: f64, v: f64, params: &MemristorParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&s), "state out of range: {s}");
    (params.g_off + s * (params.g_on - params.g_off)) * v
}

/// Upper bound on the number of uniform reset pulses at voltage magnitude
/// `v_static` that drive a state from `s_hi` below the read threshold.
///
/// Derived from the continuous-decay envelope of the reset rule; the
/// discrete rule decays at least as fast, so the true count never exceeds
/// this bound.
pub fn reset_pulse_bound(s_hi: f64, v_static: f64, params: &MemristorParams) -> usize {
    assert!(s_hi > 0.0 && v_static != 0.0);
    let per_pulse = params.alpha_reset * v_static.abs() * params.pulse_width;
    ((s_hi / params.read_threshold).ln() / per_pulse).ceil().max(1.0) as usize
}

/// Grid of memristor devices, one per sensory unit. States persist across
/// frames; `step_frame` advances them and reads the motion pattern.
#[derive(Debug, Clone)]
pub struct MemristorArray {
    rows: usize,
    cols: usize,
    s: Vec<f64>,
    params: MemristorParams,
}

impl MemristorArray {
    /// Creates an array with every device at the high-resistance rail (0).
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    pub fn new(rows: usize, cols: usize, params: MemristorParams) -> Self {
        assert!(rows >= 1 && cols >= 1, "array dimensions must be >= 1");
        MemristorArray { rows, cols, s: vec![0.0; rows * cols], params }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &MemristorParams {
        &self.params
    }

    /// Internal states, row-major.
    pub fn states(&self) -> &[f64] {
        &self.s
    }

    #[inline]
    pub fn state(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.s[row * self.cols + col]
    }

    /// Thresholds every state into a pattern bit: 1 iff state >= read_threshold.
    pub fn read_pattern(&self) -> MotionPattern {
        let bits = self
            .s
            .iter()
            .map(|&s| u8::from(s >= self.params.read_threshold))
            .collect();
        BinaryImage::from_vec(self.rows, self.cols, bits)
    }

    /// Advances the array by one frame interval: bins both frames, converts
    /// the per-unit intensity change into modulation pulses, applies one
    /// pulse per device, and reads the resulting pattern.
    pub fn step_frame(
        &mut self,
        prev: &LumaFrame,
        curr: &LumaFrame,
        bin_cfg: &BinConfig,
        mod_cfg: &ModulationConfig,
    ) -> Result<MotionPattern, MemristorError> {
        self.params.validate()?;
        mod_cfg.validate()?;
        let need_w = self.cols * bin_cfg.n;
        let need_h = self.rows * bin_cfg.m;
        for frame in [prev, curr] {
            if frame.width() != need_w || frame.height() != need_h {
                return Err(MemristorError::DimensionMismatch {
                    rows: self.rows,
                    cols: self.cols,
                    m: bin_cfg.m,
                    n: bin_cfg.n,
                    need_w,
                    need_h,
                    got_w: frame.width(),
                    got_h: frame.height(),
                });
            }
        }

        let prev_grid = bin_frame(prev, bin_cfg)?;
        let curr_grid = bin_frame(curr, bin_cfg)?;
        let vhat = sensory_voltage(&prev_grid, &curr_grid, bin_cfg)?;
        let pulses = modulate(&vhat, mod_cfg);
        for (s, &v) in self.s.iter_mut().zip(pulses.data()) {
            *s = apply_pulse(*s, v, &self.params)?;
        }
        Ok(self.read_pattern())
    }

    /// Dumps the states as a PGM frame, each state quantized to 0..255.
    pub fn dump_state_pgm(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        let data = self.s.iter().map(|&s| (s * 255.0).round() as u8).collect();
        let frame = LumaFrame::from_vec(self.cols, self.rows, data);
        io::write_pgm(&frame, path)
    }

    /// Restores an array from a state dump; each byte maps back to
    /// state = byte / 255.
    pub fn load_state_pgm(
        path: impl AsRef<Path>,
        params: MemristorParams,
    ) -> Result<Self, FormatError> {
        let frame = io::read_pgm(path)?;
        let s = frame.as_slice().iter().map(|&b| b as f64 / 255.0).collect();
        Ok(MemristorArray { rows: frame.height(), cols: frame.width(), s, params })
    }
}
