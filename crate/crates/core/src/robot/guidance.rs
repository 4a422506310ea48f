use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{PrexelPoseMap, RobotError};

/// Largest force per column. Summing both rows would count one finger twice.
pub fn column_forces(forces: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|c| (0..rows).map(|r| forces[r * cols + c]).fold(0.0, f64::max))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    /// mm/s per N
    pub gain_xy: f64,
    /// mm/s per N
    pub gain_z: f64,
    /// mm/s
    pub speed_cap: f64,
    /// Forces below this are ignored, N.
    pub deadband: f64,
    /// Invert the z direction (row 0 pressed harder moves −z).
    pub flip_z: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        // full scale 15 N maps onto the cap
        Self {
            gain_xy: 100.0 / 15.0,
            gain_z: 100.0 / 15.0,
            speed_cap: 100.0,
            deadband: 0.5,
            flip_z: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceCommand {
    /// End-effector frame, mm/s.
    pub v_xy: [f64; 2],
    /// mm/s
    pub v_z: f64,
    pub column_forces: Vec<f64>,
    /// Some non-zero force was suppressed by the deadband.
    pub deadband_applied: bool,
    pub clamped: bool,
}

impl GuidanceCommand {
    pub fn speed(&self) -> f64 {
        (self.v_xy[0].powi(2) + self.v_xy[1].powi(2) + self.v_z.powi(2)).sqrt()
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.v_xy[0], self.v_xy[1], self.v_z]
    }

    pub fn is_zero(&self) -> bool {
        self.speed() == 0.0
    }
}

/// Each pressed column pushes the flange along its inward normal; the
/// difference between the top and bottom halves of the rows drives z.
pub fn guidance_from_forces(
    forces: &[f64],
    map: &PrexelPoseMap,
    cfg: &GuidanceConfig,
) -> Result<GuidanceCommand, RobotError> {
    let (rows, cols) = (map.rows, map.cols);
    if forces.len() != rows * cols {
        return Err(RobotError::LayoutMismatch {
            expected: rows * cols,
            got: forces.len(),
        });
    }
    let mut deadband_applied = false;
    let gated: Vec<f64> = forces
        .iter()
        .map(|&f| {
            if f < cfg.deadband {
                deadband_applied |= f > 0.0;
                0.0
            } else {
                f
            }
        })
        .collect();
    let per_col = column_forces(&gated, rows, cols);
    let v_xy: Vector2<f64> = per_col
        .iter()
        .enumerate()
        .map(|(c, &f)| map.inward_normal(c) * f)
        .sum::<Vector2<f64>>()
        * cfg.gain_xy;
    let v_z = if rows >= 2 {
        let half = rows / 2;
        let upper: f64 = gated[..half * cols].iter().sum();
        let lower: f64 = gated[(rows - half) * cols..].iter().sum();
        let dz = cfg.gain_z * (upper - lower);
        if cfg.flip_z {
            -dz
        } else {
            dz
        }
    } else {
        0.0
    };
    let mut cmd = GuidanceCommand {
        v_xy: [v_xy.x, v_xy.y],
        v_z,
        column_forces: per_col,
        deadband_applied,
        clamped: false,
    };
    let speed = cmd.speed();
    if speed > cfg.speed_cap {
        let k = cfg.speed_cap / speed;
        cmd.v_xy[0] *= k;
        cmd.v_xy[1] *= k;
        cmd.v_z *= k;
        cmd.clamped = true;
    }
    Ok(cmd)
}
