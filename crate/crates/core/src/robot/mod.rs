//! Turning calibrated readings into robot behaviour, plus a point-model arm
//! to close the loop against.

mod avoidance;
mod guidance;
mod pose;
mod sim;
mod touch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use avoidance::{update_avoidance, AvoidanceConfig, AvoidanceState, FsmState};
pub use guidance::{column_forces, guidance_from_forces, GuidanceCommand, GuidanceConfig};
pub use pose::PrexelPoseMap;
pub use sim::{simulated_robot_step, SimRobot, SimRobotConfig};
pub use touch::{classify_touch, TouchClass, TouchConfig};

#[derive(Debug, Error)]
pub enum RobotError {
    #[error("pose map covers {expected} prexels but {got} forces were given")]
    LayoutMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobotCommand {
    /// Cartesian velocity in the end-effector frame, mm/s.
    Velocity { v: [f64; 3] },
    /// Move to a fixed position, mm.
    SafePose { target: [f64; 3] },
    Hold,
}
