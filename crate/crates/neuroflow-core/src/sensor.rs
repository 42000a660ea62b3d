//! Visual sensory frontend: bins pixels into sensory units, converts
//! frame-to-frame intensity change into rectified voltages, and maps those
//! onto signed modulation pulses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::LumaFrame;
use crate::grid::Grid;

/// Rectified per-unit sensory voltage, volts, everywhere >= 0.
pub type SensoryGrid = Grid;

/// Pixel binning: one sensory unit per m×n pixel block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    /// Pixel rows per unit.
    pub m: usize,
    /// Pixel columns per unit.
    pub n: usize,
    /// Volts per unit of absolute intensity change.
    pub a: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        // a maps the full 0..255 swing onto 0.5 V, inside the device's
        // switching range.
        BinConfig { m: 20, n: 20, a: 0.5 / 255.0 }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        if self.m < 1 || self.n < 1 {
            return Err(SensorError::InvalidConfig {
                what: format!("unit size {}x{} must be at least 1x1", self.m, self.n),
            });
        }
        if !self.a.is_finite() || self.a <= 0.0 {
            return Err(SensorError::InvalidConfig {
                what: format!("voltage coefficient a = {} must be finite and > 0", self.a),
            });
        }
        Ok(())
    }
}

/// Piecewise modulation: voltages above `v_up` become positive set pulses,
/// the rest become negative reset pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    /// Threshold separating set from reset, volts.
    pub v_up: f64,
    /// Gain applied on the set branch.
    pub plus1: f64,
    /// Gain applied on the reset branch.
    pub plus2: f64,
    /// Bias subtracted on the set branch, volts.
    pub bia1: f64,
    /// Bias subtracted on the reset branch, volts.
    pub bia2: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        ModulationConfig { v_up: 0.2, plus1: 1.0, plus2: 1.0, bia1: 0.0, bia2: 0.4 }
    }
}

impl ModulationConfig {
    /// Checks `bia1 < v_up <= bia2` and positive gains. The ordering keeps
    /// the two branches sign-separated: set pulses > 0, reset pulses <= 0.
    pub fn validate(&self) -> Result<(), SensorError> {
        for (name, value) in [
            ("v_up", self.v_up),
            ("plus1", self.plus1),
            ("plus2", self.plus2),
            ("bia1", self.bia1),
            ("bia2", self.bia2),
        ] {
            if !value.is_finite() {
                return Err(SensorError::InvalidConfig {
                    what: format!("{name} = {value} must be finite"),
                });
            }
        }
        if !(self.bia1 < self.v_up && self.v_up <= self.bia2) {
            return Err(SensorError::InvalidConfig {
                what: format!(
                    "need bia1 < v_up <= bia2, got bia1={}, v_up={}, bia2={}",
                    self.bia1, self.v_up, self.bia2
                ),
            });
        }
        if !(self.plus1 > 0.0 && self.plus2 > 0.0) {
            return Err(SensorError::InvalidConfig {
                what: format!("gains plus1={}, plus2={} must be > 0", self.plus1, self.plus2),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("frame {width}x{height} does not divide into {n}x{m} pixel units")]
    NonDivisible { width: usize, height: usize, m: usize, n: usize },
    #[error("grid shapes differ: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    ShapeMismatch { a_rows: usize, a_cols: usize, b_rows: usize, b_cols: usize },
    #[error("invalid sensor config: {what}")]
    InvalidConfig { what: String },
}

/// Averages each m×n pixel block into one grid cell.
///
/// The frame must divide evenly: width by `n`, height by `m`. A 1920×900
/// frame with 20×20 units yields a 45-row × 96-column grid.
pub fn bin_frame(frame: &LumaFrame, cfg: &BinConfig) -> Result<Grid, SensorError> {
    cfg.validate()?;
    let (width, height) = (frame.width(), frame.height());
    if width % cfg.n != 0 || height % cfg.m != 0 {
        return Err(SensorError::NonDivisible { width, height, m: cfg.m, n: cfg.n });
    }
    let rows = height / cfg.m;
    let cols = width / cfg.n;
    let mut grid = Grid::new(rows, cols);
    let unit_area = (cfg.m * cfg.n) as f64;
    for row in 0..rows {
        for col in 0..cols {
            let mut sum: u32 = 0;
            for py in row * cfg.m..(row + 1) * cfg.m {
                for px in col * cfg.n..(col + 1) * cfg.n {
                    sum += frame.get(px, py) as u32;
                }
            }
            grid.set(row, col, sum as f64 / unit_area);
        }
    }
    Ok(grid)
}

/// Rectified sensory voltage per unit: `a * |curr - prev|`.
pub fn sensory_voltage(
    prev: &Grid,
    curr: &Grid,
    cfg: &BinConfig,
) -> Result<SensoryGrid, SensorError> {
    cfg.validate()?;
    if !prev.same_shape(curr) {
        return Err(SensorError::ShapeMismatch {
            a_rows: prev.rows(),
            a_cols: prev.cols(),
            b_rows: curr.rows(),
            b_cols: curr.cols(),
        });
    }
    let mut out = Grid::new(prev.rows(), prev.cols());
    for (i, value) in out.data_mut().iter_mut().enumerate() {
        *value = cfg.a * (curr.data()[i] - prev.data()[i]).abs();
    }
    Ok(out)
}

/// Maps rectified voltages onto signed modulation pulses:
/// `plus1 * (vhat - bia1)` above `v_up`, else `plus2 * (vhat - bia2)`.
///
/// Total under a validated config; a voltage exactly at `v_up` takes the
/// reset branch.
pub fn modulate(vhat: &SensoryGrid, cfg: &ModulationConfig) -> Grid {
    debug_assert!(cfg.validate().is_ok(), "modulate expects a validated config");
    let mut out = Grid::new(vhat.rows(), vhat.cols());
    for (i, value) in out.data_mut().iter_mut().enumerate() {
        let v = vhat.data()[i];
        *value = if v > cfg.v_up {
            cfg.plus1 * (v - cfg.bia1)
        } else {
            cfg.plus2 * (v - cfg.bia2)
        };
    }
    out
}
