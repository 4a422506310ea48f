use serde::{Deserialize, Serialize};

use super::PhysicsError;

/// Largest addressable row or column count with two 3-bit multiplexers.
pub const MAX_MUX_LINES: usize = 8;

/// Geometry of one prexel array variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub rows: usize,
    pub cols: usize,
    /// Active area of one prexel, mm².
    pub prexel_area_mm2: f64,
    /// Center-to-center spacing of neighbouring columns, mm.
    pub pitch_mm: f64,
    /// Area of the self-capacitive electrode, cm².
    pub electrode_area_cm2: f64,
    /// Outer footprint (width, length), mm.
    pub footprint_mm: (f64, f64),
}

impl SensorLayout {
    /// 2 × 8 strip, 4 × 12 mm prexels on a 15 × 200 mm tape.
    pub fn strip_16() -> Self {
        Self {
            rows: 2,
            cols: 8,
            prexel_area_mm2: 48.0,
            pitch_mm: 25.0,
            electrode_area_cm2: 4.0,
            footprint_mm: (15.0, 200.0),
        }
    }

    /// 8 × 8 patch, 9 × 9 mm prexels at 8.8 mm pitch.
    pub fn patch_64() -> Self {
        Self {
            rows: 8,
            cols: 8,
            prexel_area_mm2: 81.0,
            pitch_mm: 8.8,
            electrode_area_cm2: 8.0,
            footprint_mm: (90.0, 90.0),
        }
    }

    pub fn preset(name: &str) -> Result<Self, PhysicsError> {
        match name {
            "16px" => Ok(Self::strip_16()),
            "64px" => Ok(Self::patch_64()),
            other => Err(PhysicsError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.rows == 0 || self.cols == 0 || self.rows > MAX_MUX_LINES || self.cols > MAX_MUX_LINES {
            return Err(PhysicsError::InvalidLayout(format!(
                "{}x{} exceeds the 3-bit multiplexer range",
                self.rows, self.cols
            )));
        }
        // Each prexel must fit in its cell: column pitch times the footprint
        // width shared between rows.
        if self.pitch_mm * self.row_extent_mm() < self.prexel_area_mm2 {
            return Err(PhysicsError::InvalidLayout(format!(
                "pitch {} mm too small for {} mm² prexels",
                self.pitch_mm, self.prexel_area_mm2
            )));
        }
        Ok(())
    }

    /// Width of the footprint available to each row, mm.
    pub fn row_extent_mm(&self) -> f64 {
        self.footprint_mm.0 / self.rows as f64
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index of a prexel.
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}
