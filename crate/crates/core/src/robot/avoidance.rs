use serde::{Deserialize, Serialize};

use super::RobotCommand;
use crate::calibration::Proximity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AvoidanceConfig {
    /// mm
    pub threshold_mm: f64,
    /// Consecutive close readings needed to trigger.
    pub k: u32,
    /// Consecutive empty readings needed to re-arm.
    pub m: u32,
    /// End-effector position the robot retreats to, mm.
    pub safe_pose: [f64; 3],
}

impl Default for AvoidanceConfig {
    fn default() -> Self {
        Self {
            threshold_mm: 100.0,
            k: 3,
            m: 10,
            safe_pose: [0.0, 0.0, 300.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    #[default]
    Monitoring,
    Triggered,
    Recovering,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvoidanceState {
    pub state: FsmState,
    pub consecutive_hits: u32,
    pub consecutive_clear: u32,
    pub triggers: u32,
}

/// Advances the collision-avoidance state machine by one proximity reading.
///
/// Only a resolved distance below the threshold counts as a hit. While
/// triggered or recovering, anything other than [`Proximity::Absent`]
/// counts as presence.
pub fn update_avoidance(
    reading: Proximity,
    mut s: AvoidanceState,
    cfg: &AvoidanceConfig,
) -> (AvoidanceState, Option<RobotCommand>) {
    let close = matches!(reading, Proximity::At { distance } if distance < cfg.threshold_mm);
    let absent = reading == Proximity::Absent;
    match s.state {
        FsmState::Monitoring => {
            if close {
                s.consecutive_hits += 1;
                if s.consecutive_hits >= cfg.k {
                    s.state = FsmState::Triggered;
                    s.consecutive_hits = 0;
                    s.triggers += 1;
                    return (s, Some(RobotCommand::SafePose { target: cfg.safe_pose }));
                }
            } else {
                s.consecutive_hits = 0;
            }
        }
        FsmState::Triggered | FsmState::Recovering => {
            if absent {
                s.state = FsmState::Recovering;
                s.consecutive_clear += 1;
                if s.consecutive_clear >= cfg.m {
                    s.state = FsmState::Monitoring;
                    s.consecutive_clear = 0;
                }
            } else {
                s.consecutive_clear = 0;
            }
        }
    }
    (s, None)
}
